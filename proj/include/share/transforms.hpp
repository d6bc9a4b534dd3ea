#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "share/cube.hpp"

namespace share {

enum class TransformKind {
  Shift,          // params {dy, dx} in pixels
  Rotation,       // params {degrees}; nearest mode requires multiples of 90
  Scale,          // params {factor} about the image centre
  Reflection,     // params {axis}: 0 flips rows (vertical), 1 flips columns
  Similarity,     // params {degrees, scale, ty, tx}
  Affine,         // params {a11, a12, a21, a22, ty, tx}
  PanTiltRotate,  // params {pan, tilt, roll} in degrees, focal length max(H, W)
  Euclidean,      // params {degrees, ty, tx}
};

enum class Interpolation { Nearest, Bilinear };
enum class WarpBoundary { Circular, Reflect };

TransformKind parse_transform_kind(std::string_view name);
std::string to_string(TransformKind kind);
Interpolation parse_interpolation(std::string_view name);
std::string to_string(Interpolation interp);
WarpBoundary parse_warp_boundary(std::string_view name);
std::string to_string(WarpBoundary boundary);

/// A geometric warp T_g applied identically to every band.
///
/// Coordinates are centred on the image: a point p of the input lands on
/// A p in the output, and each output pixel q samples the input at A^-1 q.
/// `inverted` swaps A for A^-1; it is how inverses of the projective kinds are
/// represented without changing parameterization.
struct GroupAction {
  TransformKind kind = TransformKind::Shift;
  std::vector<double> params = {0.0, 0.0};
  Interpolation interpolation = Interpolation::Nearest;
  WarpBoundary boundary = WarpBoundary::Circular;
  bool inverted = false;

  static GroupAction identity();
  static GroupAction shift(double dy, double dx, Interpolation interp = Interpolation::Nearest);
  static GroupAction rotation(double degrees, Interpolation interp = Interpolation::Nearest);
  static GroupAction scale(double factor);
  static GroupAction reflection(int axis);

  bool is_identity() const;
  nlohmann::json to_json() const;
  static GroupAction from_json(const nlohmann::json& j);

  bool operator==(const GroupAction&) const = default;
};

/// 3x3 forward homography (row-major) in centred pixel coordinates for an
/// image of the given size.
std::array<double, 9> homography(const GroupAction& t, int64_t height, int64_t width);

/// Warp the last two dims of x ([..., H, W]). Linear and differentiable in x.
torch::Tensor act(const GroupAction& t, const torch::Tensor& x);
HsiCube act(const GroupAction& t, const HsiCube& x);

GroupAction inverse(const GroupAction& t);

/// Closed compositions: shift with shift, 90-degree rotation with 90-degree
/// rotation (nearest interpolation), and anything with the identity.
/// act(compose(a, b), x) == act(a, act(b, x)). If height/width are given,
/// shift offsets are reduced modulo the size.
GroupAction compose(const GroupAction& a, const GroupAction& b, int64_t height = 0, int64_t width = 0);

/// Per-kind sampling ranges.
struct SamplerRanges {
  double scale_lo = 0.75, scale_hi = 1.25;
  double angle_deg = 30.0;        // projective kinds draw angles in [-a, a]
  double translate_frac = 0.1;    // translations in [-f, f] * size
  double shear = 0.2;             // affine perturbation of the 2x2 block
  double pan_tilt_deg = 10.0;
};

/// Draw an action of the given kind for an image of the given size.
/// Shift: integer offsets in [0, H-1] x [0, W-1], circular, nearest.
/// Rotation: 90, 180 or 270 degrees (180 only for non-square images), nearest.
/// Scale: factor in [scale_lo, scale_hi], bilinear, reflect.
/// Reflection: axis 0 or 1. Projective kinds: bilinear, reflect.
GroupAction sample(TransformKind kind, RandomSource& rng, int64_t height, int64_t width,
                   const SamplerRanges& ranges = {});

}  // namespace share
