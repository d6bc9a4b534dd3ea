#pragma once

#include <json.hpp>

#include "share/cube.hpp"

namespace share {

struct Metrics {
  double mpsnr = 0.0;  // dB, mean over bands, capped at 100
  double mssim = 0.0;  // mean over bands
  double sam = 0.0;    // degrees, mean over pixels

  nlohmann::json to_json() const { return {{"mpsnr", mpsnr}, {"mssim", mssim}, {"sam", sam}}; }
};

inline constexpr double kPsnrCap = 100.0;

/// Mean over bands of 10 log10(peak^2 / MSE_band).
double mpsnr(const torch::Tensor& estimate, const torch::Tensor& reference, double peak = 1.0);

/// Mean over bands of single-band SSIM: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range L = peak, averaged over the valid
/// region. Bands smaller than the window use the largest odd window that fits.
double mssim(const torch::Tensor& estimate, const torch::Tensor& reference, double peak = 1.0);

/// Mean spectral angle in degrees. Pixels where either spectrum is zero are skipped.
double sam(const torch::Tensor& estimate, const torch::Tensor& reference);

Metrics evaluate(const HsiCube& estimate, const HsiCube& reference);
Metrics evaluate(const torch::Tensor& estimate, const torch::Tensor& reference);

}  // namespace share
