#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include <json.hpp>
#include <torch/torch.h>

#include "share/cube.hpp"

namespace share {

// Linear forward model y = H x. Every surface accepts tensors shaped
// [..., bands, height, width] in any floating dtype and is differentiable
// through autograd, so losses can back-propagate through H.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual torch::Tensor apply(const torch::Tensor& x) const = 0;
  virtual torch::Tensor adjoint(const torch::Tensor& m) const = 0;
  virtual torch::Tensor pseudo_inverse(const torch::Tensor& m) const = 0;

  /// Spatial size of the signal that produces a measurement of size (h, w).
  virtual std::pair<int64_t, int64_t> signal_size(int64_t h, int64_t w) const = 0;
  virtual std::pair<int64_t, int64_t> measurement_size(int64_t height, int64_t width) const = 0;

  virtual nlohmann::json to_json() const = 0;
};

/// Inpainting: elementwise product with a binary mask (1 observed, 0 missing).
class InpaintOperator final : public LinearOperator {
 public:
  explicit InpaintOperator(torch::Tensor mask);

  const torch::Tensor& mask() const { return mask_; }
  double observed_fraction() const;

  torch::Tensor apply(const torch::Tensor& x) const override;
  torch::Tensor adjoint(const torch::Tensor& m) const override;
  torch::Tensor pseudo_inverse(const torch::Tensor& m) const override;
  std::pair<int64_t, int64_t> signal_size(int64_t h, int64_t w) const override { return {h, w}; }
  std::pair<int64_t, int64_t> measurement_size(int64_t h, int64_t w) const override { return {h, w}; }
  nlohmann::json to_json() const override;

 private:
  torch::Tensor masked(const torch::Tensor& x) const;
  torch::Tensor mask_;  // [bands, height, width], float32
};

enum class PadMode { Reflect, Circular, Zero };
enum class PinvMode { Bicubic, Exact };

PadMode parse_pad_mode(std::string_view name);
std::string to_string(PadMode mode);
PinvMode parse_pinv_mode(std::string_view name);
std::string to_string(PinvMode mode);

/// Per-band 2D convolution with a k x k kernel followed by stride-s
/// subsampling anchored at the top-left pixel.
///
/// The kernel is centred at index k/2 (integer division), so for even k the
/// output at i mixes x[i - k/2 + 1 .. i + k/2]. With a 2x2 box and s = 2 each
/// output pixel is the mean of its 2x2 block.
class BlurDownsampleOperator final : public LinearOperator {
 public:
  BlurDownsampleOperator(torch::Tensor kernel, int64_t factor, PadMode boundary = PadMode::Reflect,
                         PinvMode pinv = PinvMode::Bicubic);

  const torch::Tensor& kernel() const { return kernel_; }
  int64_t factor() const { return factor_; }
  PadMode boundary() const { return boundary_; }
  PinvMode pinv_mode() const { return pinv_; }

  torch::Tensor apply(const torch::Tensor& x) const override;
  torch::Tensor adjoint(const torch::Tensor& m) const override;
  /// Bicubic mode: separable Keys cubic interpolation with low-res sample j
  /// placed at high-res pixel s*j. Exact mode: with circular boundary and
  /// s = 1, division by the kernel spectrum (zero-response frequencies
  /// dropped); otherwise H^T (H H^T)^{-1} m solved by conjugate gradients,
  /// which converges slowly for square (s = 1) smooth blurs.
  torch::Tensor pseudo_inverse(const torch::Tensor& m) const override;
  std::pair<int64_t, int64_t> signal_size(int64_t h, int64_t w) const override;
  std::pair<int64_t, int64_t> measurement_size(int64_t height, int64_t width) const override;
  nlohmann::json to_json() const override;

  /// Number of CG iterations used by the exact pseudo-inverse.
  int cg_iterations = 200;
  double cg_tolerance = 1e-10;

 private:
  torch::Tensor pad(const torch::Tensor& x) const;
  torch::Tensor pad_adjoint(const torch::Tensor& xp, int64_t height, int64_t width) const;
  torch::Tensor bicubic_upsample(const torch::Tensor& m) const;
  torch::Tensor exact_pinv(const torch::Tensor& m) const;
  torch::Tensor fourier_pinv(const torch::Tensor& m) const;

  torch::Tensor kernel_;  // [k, k], float64
  int64_t factor_;
  PadMode boundary_;
  PinvMode pinv_;
};

/// Separable Gaussian kernel of the given odd-or-even size, truncated and
/// renormalized to sum to one.
torch::Tensor gaussian_kernel(int64_t size, double std);
torch::Tensor box_kernel(int64_t size);
torch::Tensor delta_kernel();

/// Kernel JSON: {"size": k, "std": s} or {"taps": [[...], ...]}.
torch::Tensor kernel_from_json(const nlohmann::json& j);
nlohmann::json kernel_to_json(const torch::Tensor& kernel);

enum class ColumnPattern { Periodic, Random, Blocks };

ColumnPattern parse_column_pattern(std::string_view name);
std::string to_string(ColumnPattern pattern);

/// Binary mask that removes whole columns through every band. The number of
/// removed columns is round(ratio * width).
torch::Tensor column_mask(int64_t bands, int64_t height, int64_t width, double ratio,
                          ColumnPattern pattern, RandomSource& rng);

/// The four column-corruption ratios used for the inpainting benchmarks.
inline constexpr double kBenchmarkMaskRatios[4] = {0.125, 0.236, 0.1667, 0.4167};

enum class NoiseKind { Gaussian, Poisson, Mixed };

NoiseKind parse_noise_kind(std::string_view name);
std::string to_string(NoiseKind kind);

struct NoiseModel {
  NoiseKind kind = NoiseKind::Gaussian;
  double sigma = 0.0;  // Gaussian std in normalized units
  double gain = 1.0;   // Poisson gain: y = gain * Poisson(m / gain)

  bool has_poisson() const { return kind != NoiseKind::Gaussian; }
  bool has_gaussian() const { return kind != NoiseKind::Poisson; }
  void validate() const;
  nlohmann::json to_json() const;
  static NoiseModel from_json(const nlohmann::json& j);
};

/// Draw a noisy measurement. Gaussian: m + sigma z. Poisson: gain Poisson(m / gain).
/// Mixed: the Poisson stage followed by the Gaussian stage. Not differentiable.
torch::Tensor corrupt(const torch::Tensor& m, const NoiseModel& noise, RandomSource& rng);
HsiCube corrupt(const HsiCube& m, const NoiseModel& noise, RandomSource& rng);

/// Convenience wrappers over the tensor surfaces.
HsiCube apply(const LinearOperator& op, const HsiCube& x);
HsiCube adjoint(const LinearOperator& op, const HsiCube& m);
HsiCube pseudo_inverse(const LinearOperator& op, const HsiCube& m);

/// Operator from its JSON description. Inpainting operators need the mask
/// tensor supplied separately.
std::unique_ptr<LinearOperator> blur_operator_from_json(const nlohmann::json& j);

}  // namespace share
