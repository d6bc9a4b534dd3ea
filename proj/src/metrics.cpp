#include "share/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace share {

namespace {

torch::Tensor as_cube(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU, torch::kFloat64);
  if (x.dim() == 4 && x.size(0) == 1) x = x.squeeze(0);
  if (x.dim() != 3) throw ShapeError("metrics expect [bands, height, width] cubes");
  return x.contiguous();
}

void check_shapes(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("metrics: estimate and reference shapes differ");
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<size_t>(size));
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    double d = i - (size - 1) / 2.0;
    g[static_cast<size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
    sum += g[static_cast<size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Valid-region separable filtering of an h x w plane.
std::vector<double> filter_valid(const double* x, int64_t h, int64_t w, const std::vector<double>& g) {
  const int64_t k = static_cast<int64_t>(g.size());
  const int64_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(static_cast<size_t>(oh * w), 0.0);
  for (int64_t i = 0; i < oh; ++i)
    for (int64_t j = 0; j < w; ++j) {
      double s = 0.0;
      for (int64_t u = 0; u < k; ++u) s += g[static_cast<size_t>(u)] * x[(i + u) * w + j];
      rows[static_cast<size_t>(i * w + j)] = s;
    }
  std::vector<double> out(static_cast<size_t>(oh * ow), 0.0);
  for (int64_t i = 0; i < oh; ++i)
    for (int64_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (int64_t v = 0; v < k; ++v) s += g[static_cast<size_t>(v)] * rows[static_cast<size_t>(i * w + j + v)];
      out[static_cast<size_t>(i * ow + j)] = s;
    }
  return out;
}

double ssim_band(const double* a, const double* b, int64_t h, int64_t w, double peak) {
  int size = static_cast<int>(std::min<int64_t>(11, std::min(h, w)));
  if (size % 2 == 0) --size;
  const auto g = gaussian_window(size, 1.5);
  const size_t n = static_cast<size_t>(h * w);
  std::vector<double> aa(n), bb(n), ab(n);
  for (size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  auto mu_a = filter_valid(a, h, w, g), mu_b = filter_valid(b, h, w, g);
  auto s_aa = filter_valid(aa.data(), h, w, g), s_bb = filter_valid(bb.data(), h, w, g);
  auto s_ab = filter_valid(ab.data(), h, w, g);
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  double total = 0.0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace

double mpsnr(const torch::Tensor& estimate, const torch::Tensor& reference, double peak) {
  auto a = as_cube(estimate), b = as_cube(reference);
  check_shapes(a, b);
  const int64_t c = a.size(0), n = a.size(1) * a.size(2);
  const double* pa = a.data_ptr<double>();
  const double* pb = b.data_ptr<double>();
  double total = 0.0;
  for (int64_t k = 0; k < c; ++k) {
    double mse = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double d = pa[k * n + i] - pb[k * n + i];
      mse += d * d;
    }
    mse /= static_cast<double>(n);
    total += mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
  }
  return total / static_cast<double>(c);
}

double mssim(const torch::Tensor& estimate, const torch::Tensor& reference, double peak) {
  auto a = as_cube(estimate), b = as_cube(reference);
  check_shapes(a, b);
  const int64_t c = a.size(0), h = a.size(1), w = a.size(2);
  double total = 0.0;
  for (int64_t k = 0; k < c; ++k) {
    total += ssim_band(a.data_ptr<double>() + k * h * w, b.data_ptr<double>() + k * h * w, h, w, peak);
  }
  return total / static_cast<double>(c);
}

double sam(const torch::Tensor& estimate, const torch::Tensor& reference) {
  auto a = as_cube(estimate), b = as_cube(reference);
  check_shapes(a, b);
  const int64_t c = a.size(0), n = a.size(1) * a.size(2);
  const double* pa = a.data_ptr<double>();
  const double* pb = b.data_ptr<double>();
  double total = 0.0;
  int64_t counted = 0;
  for (int64_t i = 0; i < n; ++i) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t k = 0; k < c; ++k) {
      const double u = pa[k * n + i], v = pb[k * n + i];
      dot += u * v;
      na += u * u;
      nb += v * v;
    }
    if (na == 0.0 || nb == 0.0) continue;
    double cosine = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    total += std::acos(cosine);
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) * 180.0 / std::numbers::pi : 0.0;
}

Metrics evaluate(const torch::Tensor& estimate, const torch::Tensor& reference) {
  return {mpsnr(estimate, reference), mssim(estimate, reference), sam(estimate, reference)};
}

Metrics evaluate(const HsiCube& estimate, const HsiCube& reference) {
  return evaluate(estimate.data(), reference.data());
}

}  // namespace share
