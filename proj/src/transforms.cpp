#include "share/transforms.hpp"

#include <cmath>
#include <numbers>

namespace share {

using nlohmann::json;
using Mat3 = std::array<double, 9>;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

Mat3 invert(const Mat3& m) {
  const double a = m[0], b = m[1], c = m[2], d = m[3], e = m[4], f = m[5], g = m[6], h = m[7], i = m[8];
  const double A = e * i - f * h, B = -(d * i - f * g), C = d * h - e * g;
  const double det = a * A + b * B + c * C;
  if (std::abs(det) < 1e-15) throw ParameterError("group action is not invertible");
  return {A / det,
          -(b * i - c * h) / det,
          (b * f - c * e) / det,
          B / det,
          (a * i - c * g) / det,
          -(a * f - c * d) / det,
          C / det,
          -(a * h - b * g) / det,
          (a * e - b * d) / det};
}

Mat3 translation(double tx, double ty) { return {1, 0, tx, 0, 1, ty, 0, 0, 1}; }

Mat3 rotation_matrix(double degrees) {
  // Exact entries for quarter turns keep nearest-mode rotations exact.
  double q = degrees / 90.0;
  if (std::abs(q - std::round(q)) < 1e-12) {
    static constexpr int kCos[4] = {1, 0, -1, 0};
    static constexpr int kSin[4] = {0, 1, 0, -1};
    int k = static_cast<int>(((static_cast<long long>(std::llround(q)) % 4) + 4) % 4);
    return {static_cast<double>(kCos[k]), static_cast<double>(-kSin[k]), 0,
            static_cast<double>(kSin[k]), static_cast<double>(kCos[k]), 0, 0, 0, 1};
  }
  double c = std::cos(degrees * kDeg), s = std::sin(degrees * kDeg);
  return {c, -s, 0, s, c, 0, 0, 0, 1};
}

Mat3 scaling(double f) { return {f, 0, 0, 0, f, 0, 0, 0, 1}; }

void expect_params(const GroupAction& t, size_t n) {
  if (t.params.size() != n) {
    throw ParameterError(to_string(t.kind) + " expects " + std::to_string(n) + " parameters");
  }
}

int64_t wrap(int64_t j, int64_t n, WarpBoundary b) {
  if (j >= 0 && j < n) return j;
  if (b == WarpBoundary::Circular) return ((j % n) + n) % n;
  if (n == 1) return 0;
  int64_t period = 2 * (n - 1);
  j = ((j % period) + period) % period;
  return j >= n ? period - j : j;
}

double snap(double v) {
  double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

struct SamplingPlan {
  std::vector<torch::Tensor> index;   // each [H*W], int64
  std::vector<torch::Tensor> weight;  // each [H*W], float64
};

SamplingPlan plan(const GroupAction& t, int64_t H, int64_t W) {
  const Mat3 back = invert(homography(t, H, W));
  const double cy = static_cast<double>(H - 1) / 2.0, cx = static_cast<double>(W - 1) / 2.0;
  const bool nearest = t.interpolation == Interpolation::Nearest;
  const int taps = nearest ? 1 : 4;
  std::vector<std::vector<int64_t>> idx(taps, std::vector<int64_t>(static_cast<size_t>(H * W)));
  std::vector<std::vector<double>> wts(taps, std::vector<double>(static_cast<size_t>(H * W)));
  for (int64_t r = 0; r < H; ++r) {
    for (int64_t c = 0; c < W; ++c) {
      double x = static_cast<double>(c) - cx, y = static_cast<double>(r) - cy;
      double sx = back[0] * x + back[1] * y + back[2];
      double sy = back[3] * x + back[4] * y + back[5];
      double sw = back[6] * x + back[7] * y + back[8];
      double col = snap(sx / sw + cx), row = snap(sy / sw + cy);
      const size_t p = static_cast<size_t>(r * W + c);
      if (nearest) {
        int64_t rr = static_cast<int64_t>(std::floor(row + 0.5));
        int64_t cc = static_cast<int64_t>(std::floor(col + 0.5));
        idx[0][p] = wrap(rr, H, t.boundary) * W + wrap(cc, W, t.boundary);
        wts[0][p] = 1.0;
        continue;
      }
      double r0 = std::floor(row), c0 = std::floor(col);
      double fr = row - r0, fc = col - c0;
      int64_t ri = static_cast<int64_t>(r0), ci = static_cast<int64_t>(c0);
      const int64_t rows[2] = {wrap(ri, H, t.boundary), wrap(ri + 1, H, t.boundary)};
      const int64_t cols[2] = {wrap(ci, W, t.boundary), wrap(ci + 1, W, t.boundary)};
      const double wr[2] = {1.0 - fr, fr}, wc[2] = {1.0 - fc, fc};
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          idx[a * 2 + b][p] = rows[a] * W + cols[b];
          wts[a * 2 + b][p] = wr[a] * wc[b];
        }
      }
    }
  }
  SamplingPlan out;
  for (int k = 0; k < taps; ++k) {
    out.index.push_back(torch::tensor(idx[k], torch::kInt64));
    out.weight.push_back(torch::tensor(wts[k], torch::kFloat64));
  }
  return out;
}

}  // namespace

TransformKind parse_transform_kind(std::string_view name) {
  if (name == "shift") return TransformKind::Shift;
  if (name == "rotation" || name == "rotate") return TransformKind::Rotation;
  if (name == "scale") return TransformKind::Scale;
  if (name == "reflection" || name == "reflect") return TransformKind::Reflection;
  if (name == "similarity") return TransformKind::Similarity;
  if (name == "affine") return TransformKind::Affine;
  if (name == "pan-tilt-rotate") return TransformKind::PanTiltRotate;
  if (name == "euclidean") return TransformKind::Euclidean;
  throw ConfigError("unknown transform kind '" + std::string(name) + "'");
}

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::Shift: return "shift";
    case TransformKind::Rotation: return "rotation";
    case TransformKind::Scale: return "scale";
    case TransformKind::Reflection: return "reflection";
    case TransformKind::Similarity: return "similarity";
    case TransformKind::Affine: return "affine";
    case TransformKind::PanTiltRotate: return "pan-tilt-rotate";
    case TransformKind::Euclidean: return "euclidean";
  }
  return "?";
}

Interpolation parse_interpolation(std::string_view name) {
  if (name == "nearest") return Interpolation::Nearest;
  if (name == "bilinear") return Interpolation::Bilinear;
  throw ConfigError("unknown interpolation '" + std::string(name) + "'");
}

std::string to_string(Interpolation interp) {
  return interp == Interpolation::Nearest ? "nearest" : "bilinear";
}

WarpBoundary parse_warp_boundary(std::string_view name) {
  if (name == "circular") return WarpBoundary::Circular;
  if (name == "reflect") return WarpBoundary::Reflect;
  throw ConfigError("unknown warp boundary '" + std::string(name) + "'");
}

std::string to_string(WarpBoundary boundary) {
  return boundary == WarpBoundary::Circular ? "circular" : "reflect";
}

GroupAction GroupAction::identity() { return {}; }

GroupAction GroupAction::shift(double dy, double dx, Interpolation interp) {
  return {TransformKind::Shift, {dy, dx}, interp, WarpBoundary::Circular};
}

GroupAction GroupAction::rotation(double degrees, Interpolation interp) {
  return {TransformKind::Rotation, {degrees}, interp, WarpBoundary::Circular};
}

GroupAction GroupAction::scale(double factor) {
  return {TransformKind::Scale, {factor}, Interpolation::Bilinear, WarpBoundary::Reflect};
}

GroupAction GroupAction::reflection(int axis) {
  return {TransformKind::Reflection, {static_cast<double>(axis)}, Interpolation::Nearest,
          WarpBoundary::Circular};
}

bool GroupAction::is_identity() const {
  if (kind == TransformKind::Reflection) return false;
  static constexpr Mat3 eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  return homography(*this, 2, 2) == eye;
}

json GroupAction::to_json() const {
  json j = {{"kind", to_string(kind)},
            {"params", params},
            {"interpolation", to_string(interpolation)},
            {"boundary", to_string(boundary)}};
  if (inverted) j["inverted"] = true;
  return j;
}

GroupAction GroupAction::from_json(const json& j) {
  GroupAction t;
  t.kind = parse_transform_kind(j.at("kind").get<std::string>());
  t.params = j.at("params").get<std::vector<double>>();
  t.interpolation = parse_interpolation(j.value("interpolation", std::string("nearest")));
  t.boundary = parse_warp_boundary(j.value("boundary", std::string("circular")));
  t.inverted = j.value("inverted", false);
  return t;
}

Mat3 homography(const GroupAction& t, int64_t height, int64_t width) {
  Mat3 m;
  const auto& p = t.params;
  switch (t.kind) {
    case TransformKind::Shift:
      expect_params(t, 2);
      m = translation(p[1], p[0]);
      break;
    case TransformKind::Rotation:
      expect_params(t, 1);
      m = rotation_matrix(p[0]);
      break;
    case TransformKind::Scale:
      expect_params(t, 1);
      if (!(p[0] > 0)) throw ParameterError("scale factor must be positive");
      m = scaling(p[0]);
      break;
    case TransformKind::Reflection:
      expect_params(t, 1);
      if (p[0] == 0.0) m = {1, 0, 0, 0, -1, 0, 0, 0, 1};
      else if (p[0] == 1.0) m = {-1, 0, 0, 0, 1, 0, 0, 0, 1};
      else throw ParameterError("reflection axis must be 0 or 1");
      break;
    case TransformKind::Euclidean:
      expect_params(t, 3);
      m = mul(translation(p[2], p[1]), rotation_matrix(p[0]));
      break;
    case TransformKind::Similarity:
      expect_params(t, 4);
      if (!(p[1] > 0)) throw ParameterError("similarity scale must be positive");
      m = mul(translation(p[3], p[2]), mul(rotation_matrix(p[0]), scaling(p[1])));
      break;
    case TransformKind::Affine:
      expect_params(t, 6);
      m = {p[0], p[1], p[5], p[2], p[3], p[4], 0, 0, 1};
      break;
    case TransformKind::PanTiltRotate: {
      expect_params(t, 3);
      const double f = static_cast<double>(std::max(height, width));
      const double pan = p[0] * kDeg, tilt = p[1] * kDeg;
      const Mat3 ry = {std::cos(pan), 0, std::sin(pan), 0, 1, 0, -std::sin(pan), 0, std::cos(pan)};
      const Mat3 rx = {1, 0, 0, 0, std::cos(tilt), -std::sin(tilt), 0, std::sin(tilt), std::cos(tilt)};
      const Mat3 k = {f, 0, 0, 0, f, 0, 0, 0, 1};
      const Mat3 kinv = {1 / f, 0, 0, 0, 1 / f, 0, 0, 0, 1};
      m = mul(k, mul(mul(rotation_matrix(p[2]), mul(rx, ry)), kinv));
      break;
    }
  }
  return t.inverted ? invert(m) : m;
}

torch::Tensor act(const GroupAction& t, const torch::Tensor& x) {
  if (x.dim() < 2) throw ShapeError("act: input needs at least 2 dimensions");
  const int64_t H = x.size(-2), W = x.size(-1);
  if (H < 2 || W < 2) throw ShapeError("act: spatial dims must be >= 2");
  if (t.interpolation == Interpolation::Nearest) {
    if (t.kind == TransformKind::Rotation) {
      expect_params(t, 1);
      double q = t.params[0] / 90.0;
      if (std::abs(q - std::round(q)) > 1e-12) {
        throw ParameterError("nearest rotation needs a multiple of 90 degrees");
      }
      if (H != W && std::llround(q) % 2 != 0) {
        throw ParameterError("quarter-turn rotation needs a square image");
      }
    } else if (t.kind != TransformKind::Shift && t.kind != TransformKind::Reflection) {
      throw ParameterError(to_string(t.kind) + " needs bilinear interpolation");
    }
  }
  auto sp = plan(t, H, W);
  auto flat = x.reshape({-1, H * W});
  torch::Tensor out;
  for (size_t k = 0; k < sp.index.size(); ++k) {
    auto term = flat.index_select(1, sp.index[k]) * sp.weight[k].to(x.dtype());
    out = out.defined() ? out + term : term;
  }
  return out.reshape(x.sizes());
}

HsiCube act(const GroupAction& t, const HsiCube& x) { return x.with_data(act(t, x.data())); }

GroupAction inverse(const GroupAction& t) {
  GroupAction inv = t;
  switch (t.kind) {
    case TransformKind::Shift:
      expect_params(t, 2);
      inv.params = {-t.params[0], -t.params[1]};
      break;
    case TransformKind::Rotation:
      expect_params(t, 1);
      inv.params = {-t.params[0]};
      break;
    case TransformKind::Scale:
      expect_params(t, 1);
      inv.params = {1.0 / t.params[0]};
      break;
    case TransformKind::Reflection:
      break;
    default:
      inv.inverted = !t.inverted;
      break;
  }
  return inv;
}

GroupAction compose(const GroupAction& a, const GroupAction& b, int64_t height, int64_t width) {
  if (a.is_identity()) return b;
  if (b.is_identity()) return a;
  auto integral = [](const GroupAction& t) {
    for (double v : t.params)
      if (v != std::round(v)) return false;
    return true;
  };
  if (a.kind == TransformKind::Shift && b.kind == TransformKind::Shift &&
      a.boundary == WarpBoundary::Circular && b.boundary == WarpBoundary::Circular &&
      integral(a) && integral(b)) {
    double dy = a.params[0] + b.params[0], dx = a.params[1] + b.params[1];
    if (height > 0) dy = static_cast<double>(wrap(static_cast<int64_t>(dy), height, WarpBoundary::Circular));
    if (width > 0) dx = static_cast<double>(wrap(static_cast<int64_t>(dx), width, WarpBoundary::Circular));
    return GroupAction::shift(dy, dx, a.interpolation);
  }
  if (a.kind == TransformKind::Rotation && b.kind == TransformKind::Rotation &&
      a.interpolation == Interpolation::Nearest && b.interpolation == Interpolation::Nearest) {
    double deg = std::fmod(a.params.at(0) + b.params.at(0), 360.0);
    if (deg < 0) deg += 360.0;
    return GroupAction::rotation(deg, Interpolation::Nearest);
  }
  throw UnsupportedError("compose: " + to_string(a.kind) + " and " + to_string(b.kind) +
                         " do not form a closed subgroup");
}

GroupAction sample(TransformKind kind, RandomSource& rng, int64_t height, int64_t width,
                   const SamplerRanges& r) {
  const double size = static_cast<double>(std::max(height, width));
  auto angle = [&] { return rng.uniform(-r.angle_deg, r.angle_deg); };
  auto offset = [&] { return rng.uniform(-r.translate_frac, r.translate_frac) * size; };
  GroupAction t;
  t.kind = kind;
  t.interpolation = Interpolation::Bilinear;
  t.boundary = WarpBoundary::Reflect;
  switch (kind) {
    case TransformKind::Shift: {
      double dy = static_cast<double>(rng.uniform_int(0, height - 1));
      double dx = static_cast<double>(rng.uniform_int(0, width - 1));
      return GroupAction::shift(dy, dx);
    }
    case TransformKind::Rotation:
      if (height != width) return GroupAction::rotation(180.0);
      return GroupAction::rotation(90.0 * static_cast<double>(rng.uniform_int(1, 3)));
    case TransformKind::Scale:
      return GroupAction::scale(rng.uniform(r.scale_lo, r.scale_hi));
    case TransformKind::Reflection:
      return GroupAction::reflection(static_cast<int>(rng.uniform_int(0, 1)));
    case TransformKind::Euclidean: {
      double a = angle(), ty = offset(), tx = offset();
      t.params = {a, ty, tx};
      return t;
    }
    case TransformKind::Similarity: {
      double a = angle(), s = rng.uniform(r.scale_lo, r.scale_hi), ty = offset(), tx = offset();
      t.params = {a, s, ty, tx};
      return t;
    }
    case TransformKind::Affine: {
      std::vector<double> p = {1, 0, 0, 1};
      for (double& v : p) v += rng.uniform(-r.shear, r.shear);
      double ty = offset(), tx = offset();
      p.push_back(ty);
      p.push_back(tx);
      t.params = p;
      return t;
    }
    case TransformKind::PanTiltRotate: {
      double pan = rng.uniform(-r.pan_tilt_deg, r.pan_tilt_deg);
      double tilt = rng.uniform(-r.pan_tilt_deg, r.pan_tilt_deg);
      t.params = {pan, tilt, angle()};
      return t;
    }
  }
  return t;
}

}  // namespace share
