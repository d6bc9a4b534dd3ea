#include "share/prep.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

namespace share {

namespace {

ValueRange compose(const ValueRange& outer, double lo, double hi) {
  double span = outer.hi - outer.lo;
  return {outer.lo + lo * span, outer.lo + hi * span};
}

std::vector<ValueRange> compose_bands(const HsiCube& cube, const std::vector<double>& lo,
                                      const std::vector<double>& hi) {
  std::vector<ValueRange> out;
  for (size_t b = 0; b < lo.size(); ++b) {
    const ValueRange& outer = cube.band_ranges().empty() ? cube.range() : cube.band_ranges()[b];
    out.push_back(compose(outer, lo[b], hi[b]));
  }
  return out;
}

}  // namespace

NormalizeKind parse_normalize_kind(std::string_view name) {
  if (name == "global-minmax") return NormalizeKind::GlobalMinMax;
  if (name == "per-band-minmax") return NormalizeKind::PerBandMinMax;
  if (name == "fixed-range") return NormalizeKind::FixedRange;
  throw ConfigError("unknown normalization '" + std::string(name) + "'");
}

HsiCube normalize(const HsiCube& cube, const NormalizeMode& mode) {
  torch::Tensor x = cube.data().to(torch::kFloat64);
  const int64_t c = cube.bands();
  switch (mode.kind) {
    case NormalizeKind::GlobalMinMax:
    case NormalizeKind::FixedRange: {
      double lo = mode.lo, hi = mode.hi;
      if (mode.kind == NormalizeKind::GlobalMinMax) {
        lo = x.min().item<double>();
        hi = x.max().item<double>();
      }
      if (!(hi > lo)) {
        throw DegenerateRangeError("normalize: range [" + std::to_string(lo) + ", " +
                                   std::to_string(hi) + "] is degenerate");
      }
      auto y = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
      if (!cube.band_ranges().empty()) {
        return HsiCube(y, ValueRange{}, cube.wavelengths(), cube.name(),
                       compose_bands(cube, std::vector<double>(c, lo), std::vector<double>(c, hi)));
      }
      return HsiCube(y, compose(cube.range(), lo, hi), cube.wavelengths(), cube.name());
    }
    case NormalizeKind::PerBandMinMax: {
      auto flat = x.view({c, -1});
      auto lo_t = std::get<0>(flat.min(1));
      auto hi_t = std::get<0>(flat.max(1));
      if (!(hi_t > lo_t).all().item<bool>()) {
        throw DegenerateRangeError("normalize: at least one band is constant");
      }
      auto y = ((x - lo_t.view({c, 1, 1})) / (hi_t - lo_t).view({c, 1, 1})).clamp(0.0, 1.0);
      std::vector<double> lo(lo_t.data_ptr<double>(), lo_t.data_ptr<double>() + c);
      std::vector<double> hi(hi_t.data_ptr<double>(), hi_t.data_ptr<double>() + c);
      return HsiCube(y, ValueRange{}, cube.wavelengths(), cube.name(), compose_bands(cube, lo, hi));
    }
  }
  throw ParameterError("unknown normalization mode");
}

Rect full_extent(const HsiCube& cube) { return {0, 0, cube.height(), cube.width()}; }

Rect center_rect(const HsiCube& cube, int64_t height, int64_t width) {
  return {(cube.height() - height) / 2, (cube.width() - width) / 2, height, width};
}

std::vector<int64_t> all_bands(int64_t bands) {
  std::vector<int64_t> out(static_cast<size_t>(bands));
  for (int64_t i = 0; i < bands; ++i) out[static_cast<size_t>(i)] = i;
  return out;
}

std::vector<int64_t> drop_bands(int64_t bands, const std::vector<int64_t>& dropped) {
  std::set<int64_t> skip(dropped.begin(), dropped.end());
  for (int64_t b : skip) {
    if (b < 0 || b >= bands) throw BoundsError("drop_bands: index " + std::to_string(b) + " out of range");
  }
  std::vector<int64_t> out;
  for (int64_t i = 0; i < bands; ++i) {
    if (!skip.count(i)) out.push_back(i);
  }
  return out;
}

HsiCube crop_and_select(const HsiCube& cube, const Rect& r, const std::vector<int64_t>& bands) {
  if (r.top < 0 || r.left < 0 || r.height < 1 || r.width < 1 || r.top + r.height > cube.height() ||
      r.left + r.width > cube.width()) {
    throw BoundsError("crop rectangle exceeds the cube extent");
  }
  if (bands.empty()) throw BoundsError("band selection is empty");
  for (int64_t b : bands) {
    if (b < 0 || b >= cube.bands()) throw BoundsError("band index " + std::to_string(b) + " out of range");
  }
  auto idx = torch::tensor(bands, torch::kInt64);
  auto data = cube.data()
                  .index_select(0, idx)
                  .narrow(1, r.top, r.height)
                  .narrow(2, r.left, r.width)
                  .contiguous();
  std::vector<double> wl;
  std::vector<ValueRange> br;
  for (int64_t b : bands) {
    if (!cube.wavelengths().empty()) wl.push_back(cube.wavelengths()[static_cast<size_t>(b)]);
    if (!cube.band_ranges().empty()) br.push_back(cube.band_ranges()[static_cast<size_t>(b)]);
  }
  return HsiCube(data, cube.range(), wl, cube.name(), br);
}

HsiCube synthesize_lowrank_cube(int64_t c, int64_t h, int64_t w, int64_t rank, RandomSource& rng) {
  if (c < 1 || h < 1 || w < 1) throw ParameterError("synthesize: dimensions must be positive");
  if (rank < 1 || rank > std::min(c, h * w)) {
    throw ParameterError("synthesize: rank must lie in [1, min(c, h*w)]");
  }
  auto f64 = torch::TensorOptions().dtype(torch::kFloat64);

  // Endmembers: baseline plus a few Gaussian absorption/reflection bumps.
  auto t = c > 1 ? torch::linspace(0.0, 1.0, c, f64) : torch::zeros({1}, f64);
  auto endmembers = torch::zeros({c, rank}, f64);
  for (int64_t k = 0; k < rank; ++k) {
    auto spectrum = torch::full({c}, rng.uniform(0.05, 0.2), f64);
    for (int j = 0; j < 3; ++j) {
      double amp = rng.uniform(0.2, 1.0);
      double mu = rng.uniform(0.0, 1.0);
      double s = rng.uniform(0.08, 0.3);
      spectrum += amp * torch::exp(-(t - mu).pow(2) / (2 * s * s));
    }
    endmembers.select(1, k).copy_(spectrum);
  }

  // Abundances: smooth Gaussian blobs plus one sharp-edged rectangle each.
  auto ys = torch::arange(h, f64).view({h, 1});
  auto xs = torch::arange(w, f64).view({1, w});
  const double size = static_cast<double>(std::max(h, w));
  auto abundances = torch::zeros({rank, h, w}, f64);
  for (int64_t k = 0; k < rank; ++k) {
    auto map = torch::full({h, w}, 0.05, f64);
    for (int j = 0; j < 4; ++j) {
      double cy = rng.uniform(0.0, static_cast<double>(h));
      double cx = rng.uniform(0.0, static_cast<double>(w));
      double s = rng.uniform(0.1, 0.35) * size;
      double amp = rng.uniform(0.3, 1.0);
      map += amp * torch::exp(-((ys - cy).pow(2) + (xs - cx).pow(2)) / (2 * s * s));
    }
    int64_t rh = std::max<int64_t>(1, rng.uniform_int(h / 6, std::max(h / 6, h / 3)));
    int64_t rw = std::max<int64_t>(1, rng.uniform_int(w / 6, std::max(w / 6, w / 3)));
    int64_t top = rng.uniform_int(0, h - rh);
    int64_t left = rng.uniform_int(0, w - rw);
    map.narrow(0, top, rh).narrow(1, left, rw) += rng.uniform(0.3, 0.8);
    abundances[k].copy_(map);
  }
  if (rank > 1) abundances = abundances / abundances.sum(0, true);

  auto mixed = endmembers.matmul(abundances.view({rank, h * w})).view({c, h, w});
  mixed = mixed / mixed.max();
  return HsiCube(mixed, ValueRange{}, {}, "lowrank-r" + std::to_string(rank));
}

}  // namespace share
