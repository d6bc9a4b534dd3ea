#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "share/physics.hpp"
#include "share/transforms.hpp"

namespace share {

/// A reconstruction function y -> x over [N, c, h, w] (or [c, h, w]) tensors.
using Reconstructor = std::function<torch::Tensor(const torch::Tensor&)>;

enum class LossTerm { Mc, Sure, Ec, Rec };

LossTerm parse_loss_term(std::string_view name);
std::string to_string(LossTerm term);

struct LossSpec {
  std::vector<LossTerm> terms = {LossTerm::Sure, LossTerm::Rec};
  double alpha = 1.0;
  double tau = 0.01;
  NoiseModel noise{NoiseKind::Gaussian, 25.0 / 255.0, 1.0};
  int probe_count = 1;
  /// Stop gradients through the target branch T f(y) of EC/REC.
  bool detach_target = false;

  bool has(LossTerm t) const;
  /// Throws SpecError for {mc, sure} or {ec, rec} together, empty term sets,
  /// non-finite alpha, tau <= 0 or probe_count < 1.
  void validate() const;

  nlohmann::json to_json() const;
  static LossSpec from_json(const nlohmann::json& j);
};

/// Independent random streams consumed by the stochastic loss terms.
struct LossRng {
  RandomSource probe;  // SURE divergence probes
  RandomSource noise;  // REC re-noising
  explicit LossRng(uint64_t seed)
      : probe(seed, "sure-probe"), noise(seed, "rec-noise") {}
};

struct LossBreakdown {
  torch::Tensor total;
  torch::Tensor fidelity;      // mc or sure (zero when absent)
  torch::Tensor equivariance;  // ec or rec, unweighted (zero when absent)
};

/// mean((H f(y) - y)^2)
torch::Tensor loss_mc(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y);

/// Gaussian SURE with a Monte-Carlo divergence, all terms per-element means:
/// mean((y - H f(y))^2) - sigma^2 + 2 sigma^2 / (tau n) b^T (H f(y + tau b) - H f(y)),
/// with b ~ N(0, I), averaged over `probes` independent draws.
torch::Tensor loss_sure_gaussian(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                                 double sigma, double tau, RandomSource& rng, int probes = 1);

/// Poisson unbiased risk estimate (gain gamma), Rademacher probes:
/// mean((y - H f(y))^2) - gamma mean(y) + 2 gamma / tau mean(b * y * (H f(y + tau b) - H f(y))).
torch::Tensor loss_sure_poisson(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                                double gain, double tau, RandomSource& rng, int probes = 1);

/// Mixed Poisson-Gaussian risk estimate; reduces to the Gaussian form as gain -> 0
/// and to the Poisson form at sigma = 0.
torch::Tensor loss_sure_mixed(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                              double gain, double sigma, double tau, RandomSource& rng, int probes = 1);

/// mean((T f(y) - f(H T f(y)))^2)
torch::Tensor loss_ec(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                      const GroupAction& t, bool detach_target = false);

/// mean((T f(y) - f(y~))^2) with y~ a fresh noisy measurement of T f(y).
torch::Tensor loss_rec(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                       const GroupAction& t, const NoiseModel& noise, RandomSource& rng,
                       bool detach_target = false);

/// Fidelity term plus alpha times the equivariance term.
LossBreakdown loss_share(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                         const LossSpec& spec, const GroupAction& t, LossRng& rng);

}  // namespace share
