#include "share/physics.hpp"

#include <cmath>
#include <set>

namespace share {

using nlohmann::json;
using torch::indexing::Slice;

namespace {

// Collapse [..., H, W] into [B, H, W] and remember the leading shape.
std::pair<torch::Tensor, std::vector<int64_t>> flatten_planes(const torch::Tensor& x) {
  if (x.dim() < 2) throw ShapeError("operator input needs at least 2 dimensions");
  std::vector<int64_t> lead(x.sizes().begin(), x.sizes().end() - 2);
  return {x.reshape({-1, x.size(-2), x.size(-1)}), lead};
}

torch::Tensor unflatten_planes(const torch::Tensor& x, std::vector<int64_t> lead) {
  lead.push_back(x.size(-2));
  lead.push_back(x.size(-1));
  return x.reshape(lead);
}

int64_t mod(int64_t a, int64_t n) { return ((a % n) + n) % n; }

// Source index for every padded position; `n` is the zero sentinel.
torch::Tensor pad_index_map(int64_t n, int64_t before, int64_t after, PadMode mode) {
  std::vector<int64_t> idx;
  idx.reserve(static_cast<size_t>(n + before + after));
  for (int64_t p = 0; p < n + before + after; ++p) {
    int64_t j = p - before;
    if (j < 0 || j >= n) {
      switch (mode) {
        case PadMode::Zero: j = n; break;
        case PadMode::Circular: j = mod(j, n); break;
        case PadMode::Reflect:
          if (n == 1) {
            j = 0;
          } else {
            int64_t period = 2 * (n - 1);
            j = mod(j, period);
            if (j >= n) j = period - j;
          }
          break;
      }
    }
    idx.push_back(j);
  }
  return torch::tensor(idx, torch::kInt64);
}

double keys_cubic(double d) {
  constexpr double a = -0.5;
  d = std::abs(d);
  if (d <= 1.0) return ((a + 2) * d - (a + 3)) * d * d + 1;
  if (d < 2.0) return ((a * d - 5 * a) * d + 8 * a) * d - 4 * a;
  return 0.0;
}

// [n_out, n_in] interpolation matrix placing input sample j at output s*j.
torch::Tensor cubic_matrix(int64_t n_in, int64_t factor) {
  const int64_t n_out = n_in * factor;
  auto u = torch::zeros({n_out, n_in}, torch::kFloat64);
  auto acc = u.accessor<double, 2>();
  for (int64_t i = 0; i < n_out; ++i) {
    double t = static_cast<double>(i) / static_cast<double>(factor);
    int64_t i0 = static_cast<int64_t>(std::floor(t));
    double frac = t - static_cast<double>(i0);
    for (int64_t m = -1; m <= 2; ++m) {
      int64_t j = std::clamp<int64_t>(i0 + m, 0, n_in - 1);
      acc[i][j] += keys_cubic(frac - static_cast<double>(m));
    }
  }
  return u;
}

}  // namespace

// --- inpainting ---------------------------------------------------------------

InpaintOperator::InpaintOperator(torch::Tensor mask) {
  if (!mask.defined() || mask.dim() != 3) throw ShapeError("mask must be [bands, height, width]");
  mask_ = mask.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  if (!((mask_ == 0) | (mask_ == 1)).all().item<bool>()) {
    throw ParameterError("mask values must be 0 or 1");
  }
}

double InpaintOperator::observed_fraction() const { return mask_.mean().item<double>(); }

torch::Tensor InpaintOperator::masked(const torch::Tensor& x) const {
  if (x.dim() < 3 || x.size(-3) != mask_.size(0) || x.size(-2) != mask_.size(1) ||
      x.size(-1) != mask_.size(2)) {
    throw ShapeError("inpainting operator: input shape does not match the mask");
  }
  return x * mask_.to(x.dtype());
}

torch::Tensor InpaintOperator::apply(const torch::Tensor& x) const { return masked(x); }
torch::Tensor InpaintOperator::adjoint(const torch::Tensor& m) const { return masked(m); }
torch::Tensor InpaintOperator::pseudo_inverse(const torch::Tensor& m) const { return masked(m); }

json InpaintOperator::to_json() const {
  return {{"type", "inpaint"},
          {"bands", mask_.size(0)},
          {"height", mask_.size(1)},
          {"width", mask_.size(2)},
          {"observed_fraction", observed_fraction()}};
}

// --- blur + downsample --------------------------------------------------------

PadMode parse_pad_mode(std::string_view name) {
  if (name == "reflect") return PadMode::Reflect;
  if (name == "circular") return PadMode::Circular;
  if (name == "zero") return PadMode::Zero;
  throw ConfigError("unknown boundary '" + std::string(name) + "'");
}

std::string to_string(PadMode mode) {
  switch (mode) {
    case PadMode::Reflect: return "reflect";
    case PadMode::Circular: return "circular";
    case PadMode::Zero: return "zero";
  }
  return "?";
}

PinvMode parse_pinv_mode(std::string_view name) {
  if (name == "bicubic") return PinvMode::Bicubic;
  if (name == "exact") return PinvMode::Exact;
  throw ConfigError("unknown pseudo-inverse mode '" + std::string(name) + "'");
}

std::string to_string(PinvMode mode) { return mode == PinvMode::Bicubic ? "bicubic" : "exact"; }

BlurDownsampleOperator::BlurDownsampleOperator(torch::Tensor kernel, int64_t factor, PadMode boundary,
                                               PinvMode pinv)
    : factor_(factor), boundary_(boundary), pinv_(pinv) {
  if (!kernel.defined() || kernel.dim() != 2 || kernel.size(0) != kernel.size(1) || kernel.size(0) < 1) {
    throw ParameterError("blur kernel must be a square 2D array");
  }
  kernel_ = kernel.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  if ((kernel_ < 0).any().item<bool>()) throw ParameterError("blur kernel must be nonnegative");
  if (std::abs(kernel_.sum().item<double>() - 1.0) > 1e-12) {
    throw ParameterError("blur kernel must sum to 1");
  }
  if (factor_ < 1) throw ParameterError("downsampling factor must be >= 1");
}

std::pair<int64_t, int64_t> BlurDownsampleOperator::measurement_size(int64_t height, int64_t width) const {
  return {(height + factor_ - 1) / factor_, (width + factor_ - 1) / factor_};
}

std::pair<int64_t, int64_t> BlurDownsampleOperator::signal_size(int64_t h, int64_t w) const {
  return {h * factor_, w * factor_};
}

torch::Tensor BlurDownsampleOperator::pad(const torch::Tensor& x) const {
  const int64_t k = kernel_.size(0);
  const int64_t before = k - 1 - k / 2, after = k / 2;
  const int64_t B = x.size(0), H = x.size(1), W = x.size(2);
  auto rows = pad_index_map(H, before, after, boundary_);
  auto cols = pad_index_map(W, before, after, boundary_);
  auto xr = torch::cat({x, torch::zeros({B, 1, W}, x.options())}, 1).index_select(1, rows);
  return torch::cat({xr, torch::zeros({B, xr.size(1), 1}, x.options())}, 2).index_select(2, cols);
}

torch::Tensor BlurDownsampleOperator::pad_adjoint(const torch::Tensor& xp, int64_t H, int64_t W) const {
  const int64_t k = kernel_.size(0);
  const int64_t before = k - 1 - k / 2, after = k / 2;
  const int64_t B = xp.size(0);
  auto rows = pad_index_map(H, before, after, boundary_);
  auto cols = pad_index_map(W, before, after, boundary_);
  auto xc = torch::zeros({B, xp.size(1), W + 1}, xp.options()).index_add(2, cols, xp).narrow(2, 0, W);
  return torch::zeros({B, H + 1, W}, xp.options()).index_add(1, rows, xc).narrow(1, 0, H);
}

torch::Tensor BlurDownsampleOperator::apply(const torch::Tensor& x) const {
  auto [planes, lead] = flatten_planes(x);
  auto flipped = kernel_.flip({0, 1}).to(x.dtype()).view({1, 1, kernel_.size(0), kernel_.size(1)});
  auto out = torch::conv2d(pad(planes).unsqueeze(1), flipped, {}, factor_).squeeze(1);
  return unflatten_planes(out, lead);
}

torch::Tensor BlurDownsampleOperator::adjoint(const torch::Tensor& m) const {
  auto [planes, lead] = flatten_planes(m);
  const int64_t h = planes.size(1), w = planes.size(2);
  const int64_t H = h * factor_, W = w * factor_;
  const int64_t k = kernel_.size(0);
  auto flipped = kernel_.flip({0, 1}).to(m.dtype()).view({1, 1, k, k});
  // Transposed strided correlation lands on the padded grid of size H + k - 1.
  int64_t op_h = (H + k - 1) - ((h - 1) * factor_ + k);
  int64_t op_w = (W + k - 1) - ((w - 1) * factor_ + k);
  auto up = torch::conv_transpose2d(planes.unsqueeze(1), flipped, {}, factor_, 0, {op_h, op_w}).squeeze(1);
  return unflatten_planes(pad_adjoint(up, H, W), lead);
}

torch::Tensor BlurDownsampleOperator::bicubic_upsample(const torch::Tensor& m) const {
  auto uh = cubic_matrix(m.size(-2), factor_).to(m.dtype());
  auto uw = cubic_matrix(m.size(-1), factor_).to(m.dtype());
  return torch::matmul(torch::matmul(uh, m), uw.t());
}

torch::Tensor BlurDownsampleOperator::exact_pinv(const torch::Tensor& m) const {
  auto gram = [this](const torch::Tensor& v) { return apply(adjoint(v)); };
  auto z = torch::zeros_like(m);
  auto r = m;
  auto p = r;
  double rs = (r * r).sum().item<double>();
  const double stop = cg_tolerance * cg_tolerance * std::max(rs, 1e-300);
  for (int it = 0; it < cg_iterations && rs > stop; ++it) {
    auto ap = gram(p);
    double alpha = rs / (p * ap).sum().item<double>();
    z = z + alpha * p;
    r = r - alpha * ap;
    double rs_new = (r * r).sum().item<double>();
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return adjoint(z);
}

torch::Tensor BlurDownsampleOperator::fourier_pinv(const torch::Tensor& m) const {
  auto [planes, lead] = flatten_planes(m);
  const int64_t H = planes.size(1), W = planes.size(2), k = kernel_.size(0);
  // Circular convolution kernel image: tap u sits at (u - k/2) mod size.
  auto img = torch::zeros({H, W}, torch::kFloat64);
  auto taps = kernel_.accessor<double, 2>();
  auto acc = img.accessor<double, 2>();
  auto wrap = [](int64_t i, int64_t n) { return ((i % n) + n) % n; };
  for (int64_t u = 0; u < k; ++u)
    for (int64_t v = 0; v < k; ++v) acc[wrap(u - k / 2, H)][wrap(v - k / 2, W)] += taps[u][v];
  auto K = torch::fft::fft2(img);
  auto power = K.abs().pow(2);
  auto inv = torch::where(power > 1e-14 * power.max(), K.conj() / power, torch::zeros_like(K));
  auto out = torch::real(torch::fft::ifft2(torch::fft::fft2(planes.to(torch::kFloat64)) * inv));
  return unflatten_planes(out.to(m.scalar_type()), lead);
}

torch::Tensor BlurDownsampleOperator::pseudo_inverse(const torch::Tensor& m) const {
  if (m.dim() < 2) throw ShapeError("measurement needs at least 2 dimensions");
  if (pinv_ == PinvMode::Bicubic) return bicubic_upsample(m);
  if (boundary_ == PadMode::Circular && factor_ == 1) return fourier_pinv(m);
  return exact_pinv(m);
}

json BlurDownsampleOperator::to_json() const {
  return {{"type", "blur-downsample"},
          {"kernel", kernel_to_json(kernel_)},
          {"factor", factor_},
          {"boundary", to_string(boundary_)},
          {"pinv", to_string(pinv_)}};
}

std::unique_ptr<LinearOperator> blur_operator_from_json(const json& j) {
  return std::make_unique<BlurDownsampleOperator>(
      kernel_from_json(j.at("kernel")), j.value("factor", int64_t{2}),
      parse_pad_mode(j.value("boundary", std::string("reflect"))),
      parse_pinv_mode(j.value("pinv", std::string("bicubic"))));
}

// --- kernels and masks --------------------------------------------------------

torch::Tensor gaussian_kernel(int64_t size, double std) {
  if (size < 1) throw ParameterError("kernel size must be >= 1");
  if (!(std > 0)) throw ParameterError("kernel std must be positive");
  auto t = torch::arange(size, torch::kFloat64) - static_cast<double>(size - 1) / 2.0;
  auto g = torch::exp(-t.pow(2) / (2 * std * std));
  g = g / g.sum();
  auto k = torch::outer(g, g);
  return k / k.sum();
}

torch::Tensor box_kernel(int64_t size) {
  if (size < 1) throw ParameterError("kernel size must be >= 1");
  return torch::full({size, size}, 1.0 / static_cast<double>(size * size), torch::kFloat64);
}

torch::Tensor delta_kernel() { return torch::ones({1, 1}, torch::kFloat64); }

torch::Tensor kernel_from_json(const json& j) {
  if (j.contains("taps")) {
    auto rows = j.at("taps").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw ConfigError("kernel taps are empty");
    auto k = torch::zeros({static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows[0].size())},
                          torch::kFloat64);
    for (size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows[0].size()) throw ConfigError("kernel taps are ragged");
      for (size_t c = 0; c < rows[r].size(); ++c) {
        k[static_cast<int64_t>(r)][static_cast<int64_t>(c)] = rows[r][c];
      }
    }
    return k;
  }
  std::string type = j.value("type", std::string("gaussian"));
  if (type == "delta") return delta_kernel();
  if (type == "box") return box_kernel(j.at("size").get<int64_t>());
  return gaussian_kernel(j.at("size").get<int64_t>(), j.at("std").get<double>());
}

json kernel_to_json(const torch::Tensor& kernel) {
  auto k = kernel.to(torch::kFloat64).contiguous();
  std::vector<std::vector<double>> taps(static_cast<size_t>(k.size(0)));
  auto acc = k.accessor<double, 2>();
  for (int64_t r = 0; r < k.size(0); ++r) {
    for (int64_t c = 0; c < k.size(1); ++c) taps[static_cast<size_t>(r)].push_back(acc[r][c]);
  }
  return {{"taps", taps}};
}

torch::Tensor column_mask(int64_t bands, int64_t height, int64_t width, double ratio,
                          ColumnPattern pattern, RandomSource& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ParameterError("mask ratio must lie in [0, 1)");
  const int64_t count = std::llround(ratio * static_cast<double>(width));
  std::set<int64_t> cols;
  switch (pattern) {
    case ColumnPattern::Periodic:
      for (int64_t j = 0; j < count; ++j) cols.insert(j * width / count);
      break;
    case ColumnPattern::Random: {
      auto perm = torch::randperm(width, rng.generator(), torch::TensorOptions().dtype(torch::kInt64));
      for (int64_t j = 0; j < count; ++j) cols.insert(perm[j].item<int64_t>());
      break;
    }
    case ColumnPattern::Blocks: {
      const int64_t nb = std::min<int64_t>(4, count);
      for (int64_t b = 0; b < nb; ++b) {
        int64_t size = count / nb + (b < count % nb ? 1 : 0);
        int64_t start = (2 * b + 1) * width / (2 * nb) - size / 2;
        for (int64_t j = 0; j < size; ++j) cols.insert(std::clamp<int64_t>(start + j, 0, width - 1));
      }
      for (int64_t j = 0; static_cast<int64_t>(cols.size()) < count && j < width; ++j) cols.insert(j);
      break;
    }
  }
  auto mask = torch::ones({bands, height, width}, torch::kFloat32);
  for (int64_t j : cols) mask.select(2, j).zero_();
  return mask;
}

ColumnPattern parse_column_pattern(std::string_view name) {
  if (name == "periodic") return ColumnPattern::Periodic;
  if (name == "random") return ColumnPattern::Random;
  if (name == "blocks") return ColumnPattern::Blocks;
  throw ParameterError("unknown column pattern '" + std::string(name) + "'");
}

std::string to_string(ColumnPattern pattern) {
  switch (pattern) {
    case ColumnPattern::Periodic: return "periodic";
    case ColumnPattern::Random: return "random";
    case ColumnPattern::Blocks: return "blocks";
  }
  return "?";
}

// --- noise --------------------------------------------------------------------

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "poisson") return NoiseKind::Poisson;
  if (name == "mixed") return NoiseKind::Mixed;
  throw ConfigError("unknown noise kind '" + std::string(name) + "'");
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Poisson: return "poisson";
    case NoiseKind::Mixed: return "mixed";
  }
  return "?";
}

void NoiseModel::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParameterError("noise sigma must be >= 0");
  if (has_poisson() && !(gain > 0.0)) throw ParameterError("Poisson gain must be > 0");
}

json NoiseModel::to_json() const {
  return {{"kind", to_string(kind)}, {"sigma", sigma}, {"gain", gain}};
}

NoiseModel NoiseModel::from_json(const json& j) {
  NoiseModel n;
  n.kind = parse_noise_kind(j.value("kind", std::string("gaussian")));
  n.sigma = j.value("sigma", 0.0);
  n.gain = j.value("gain", 1.0);
  n.validate();
  return n;
}

torch::Tensor corrupt(const torch::Tensor& m, const NoiseModel& noise, RandomSource& rng) {
  noise.validate();
  torch::NoGradGuard no_grad;
  torch::Tensor out = m.detach();
  if (noise.has_poisson()) {
    if ((out < 0).any().item<bool>()) throw DomainError("Poisson noise needs a nonnegative measurement");
    out = noise.gain * torch::poisson(out / noise.gain, rng.generator());
  }
  if (noise.has_gaussian() && noise.sigma > 0.0) {
    out = out + noise.sigma * torch::randn(out.sizes(), rng.generator(), out.options());
  }
  return out;
}

HsiCube corrupt(const HsiCube& m, const NoiseModel& noise, RandomSource& rng) {
  return m.with_data(corrupt(m.data(), noise, rng));
}

HsiCube apply(const LinearOperator& op, const HsiCube& x) {
  return HsiCube(op.apply(x.data()), x.range(), x.wavelengths(), x.name(), x.band_ranges());
}

HsiCube adjoint(const LinearOperator& op, const HsiCube& m) {
  return HsiCube(op.adjoint(m.data()), m.range(), m.wavelengths(), m.name(), m.band_ranges());
}

HsiCube pseudo_inverse(const LinearOperator& op, const HsiCube& m) {
  return HsiCube(op.pseudo_inverse(m.data()), m.range(), m.wavelengths(), m.name(), m.band_ranges());
}

}  // namespace share
