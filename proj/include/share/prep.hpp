#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "share/cube.hpp"

namespace share {

enum class NormalizeKind { GlobalMinMax, PerBandMinMax, FixedRange };

struct NormalizeMode {
  NormalizeKind kind = NormalizeKind::GlobalMinMax;
  // Only used by FixedRange: values are mapped (v - lo) / (hi - lo) and clamped to [0, 1].
  double lo = 0.0;
  double hi = 1.0;

  static NormalizeMode global_minmax() { return {NormalizeKind::GlobalMinMax}; }
  static NormalizeMode per_band_minmax() { return {NormalizeKind::PerBandMinMax}; }
  static NormalizeMode fixed(double lo, double hi) { return {NormalizeKind::FixedRange, lo, hi}; }
};

NormalizeKind parse_normalize_kind(std::string_view name);

/// Affine map onto [0, 1]. The inverse is recorded in the cube's value range,
/// composed with whatever range the input already carried.
HsiCube normalize(const HsiCube& cube, const NormalizeMode& mode);

struct Rect {
  int64_t top = 0;
  int64_t left = 0;
  int64_t height = 0;
  int64_t width = 0;
};

Rect full_extent(const HsiCube& cube);
Rect center_rect(const HsiCube& cube, int64_t height, int64_t width);

/// Band indices 0..bands-1 with the listed ones removed.
std::vector<int64_t> drop_bands(int64_t bands, const std::vector<int64_t>& dropped);
std::vector<int64_t> all_bands(int64_t bands);

/// Exact sub-array: rows [top, top+height), cols [left, left+width), bands in
/// the order given. Wavelengths and per-band ranges follow the selection.
HsiCube crop_and_select(const HsiCube& cube, const Rect& spatial, const std::vector<int64_t>& bands);

/// Linear-mixture fixture: `rank` smooth nonnegative endmember spectra mixed by
/// `rank` smooth nonnegative abundance maps, scaled so the maximum is 1. The
/// flattened [bands, pixels] matrix has rank at most `rank`.
HsiCube synthesize_lowrank_cube(int64_t bands, int64_t height, int64_t width, int64_t rank,
                                RandomSource& rng);

}  // namespace share
