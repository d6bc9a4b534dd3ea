#include "share/losses.hpp"

#include <algorithm>
#include <cmath>

#include "json_keys.hpp"

namespace share {

using nlohmann::json;

LossTerm parse_loss_term(std::string_view name) {
  if (name == "mc") return LossTerm::Mc;
  if (name == "sure") return LossTerm::Sure;
  if (name == "ec") return LossTerm::Ec;
  if (name == "rec") return LossTerm::Rec;
  throw SpecError("unknown loss term '" + std::string(name) + "'");
}

std::string to_string(LossTerm term) {
  switch (term) {
    case LossTerm::Mc: return "mc";
    case LossTerm::Sure: return "sure";
    case LossTerm::Ec: return "ec";
    case LossTerm::Rec: return "rec";
  }
  return "?";
}

bool LossSpec::has(LossTerm t) const { return std::find(terms.begin(), terms.end(), t) != terms.end(); }

void LossSpec::validate() const {
  if (terms.empty()) throw SpecError("loss spec has no terms");
  if (has(LossTerm::Mc) && has(LossTerm::Sure)) throw SpecError("mc and sure are mutually exclusive");
  if (has(LossTerm::Ec) && has(LossTerm::Rec)) throw SpecError("ec and rec are mutually exclusive");
  for (size_t i = 0; i < terms.size(); ++i)
    for (size_t j = i + 1; j < terms.size(); ++j)
      if (terms[i] == terms[j]) throw SpecError("duplicate loss term " + to_string(terms[i]));
  if (!std::isfinite(alpha) || alpha < 0) throw SpecError("alpha must be finite and >= 0");
  if (!(tau > 0)) throw SpecError("tau must be > 0");
  if (probe_count < 1) throw SpecError("probe_count must be >= 1");
  noise.validate();
}

json LossSpec::to_json() const {
  std::vector<std::string> names;
  for (auto t : terms) names.push_back(to_string(t));
  return {{"terms", names}, {"alpha", alpha}, {"tau", tau}, {"noise", noise.to_json()},
          {"probe_count", probe_count}, {"detach_target", detach_target}};
}

LossSpec LossSpec::from_json(const json& j) {
  detail::reject_unknown_keys(j, {"terms", "alpha", "tau", "noise", "probe_count", "detach_target"}, "loss");
  LossSpec s;
  if (j.contains("terms")) {
    s.terms.clear();
    for (const auto& t : j.at("terms")) s.terms.push_back(parse_loss_term(t.get<std::string>()));
  }
  s.alpha = j.value("alpha", s.alpha);
  s.tau = j.value("tau", s.tau);
  if (j.contains("noise")) s.noise = NoiseModel::from_json(j.at("noise"));
  s.probe_count = j.value("probe_count", s.probe_count);
  s.detach_target = j.value("detach_target", s.detach_target);
  s.validate();
  return s;
}

namespace {

torch::Tensor squared_error(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).pow(2).mean(); }

// Monte-Carlo divergence term shared by the SURE variants:
// mean over probes of mean(weight * b * (H f(y + tau b) - H f(y))) / tau.
template <typename ProbeFn>
torch::Tensor divergence(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                         const torch::Tensor& hx, const torch::Tensor& weight, double tau, int probes,
                         ProbeFn draw) {
  torch::Tensor acc;
  for (int p = 0; p < probes; ++p) {
    auto b = draw();
    auto term = (weight * b * (op.apply(f(y + tau * b)) - hx)).mean() / tau;
    acc = acc.defined() ? acc + term : term;
  }
  return acc / static_cast<double>(probes);
}

torch::Tensor sure_gaussian_from(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                                 const torch::Tensor& hx, double sigma, double tau, RandomSource& rng,
                                 int probes) {
  auto mc = squared_error(hx, y);
  if (sigma == 0.0) return mc;
  auto ones = torch::ones({}, y.options());
  auto div = divergence(f, op, y, hx, ones, tau, probes,
                        [&] { return rng.normal(y.sizes(), y.scalar_type()); });
  return mc - sigma * sigma + 2.0 * sigma * sigma * div;
}

torch::Tensor sure_poisson_from(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                                const torch::Tensor& hx, double gain, double tau, RandomSource& rng,
                                int probes) {
  if ((y < 0).any().item<bool>()) throw DomainError("Poisson SURE needs a nonnegative measurement");
  auto div = divergence(f, op, y, hx, y, tau, probes,
                        [&] { return rng.rademacher(y.sizes(), y.scalar_type()); });
  return squared_error(hx, y) - gain * y.mean() + 2.0 * gain * div;
}

torch::Tensor sure_mixed_from(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                              const torch::Tensor& hx, double gain, double sigma, double tau,
                              RandomSource& rng, int probes) {
  // Gaussian stage may push y below zero, so no domain check here.
  auto weight = gain * y + sigma * sigma;
  auto div = divergence(f, op, y, hx, weight, tau, probes,
                        [&] { return rng.normal(y.sizes(), y.scalar_type()); });
  return squared_error(hx, y) - gain * y.mean() - sigma * sigma + 2.0 * div;
}

// y~ = m + eps, with eps drawn from the noise model and treated as a constant.
torch::Tensor renoise(const torch::Tensor& m, const NoiseModel& noise, RandomSource& rng) {
  if (noise.kind == NoiseKind::Gaussian) {
    if (noise.sigma == 0.0) return m;
    return m + noise.sigma * rng.normal(m.sizes(), m.scalar_type());
  }
  auto clean = m.detach().clamp_min(0.0);
  return m + (corrupt(clean, noise, rng) - m.detach());
}

torch::Tensor equivariance_from(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& x1,
                                const GroupAction& t, const NoiseModel* noise, RandomSource* rng,
                                bool detach_target) {
  auto x2 = act(t, x1);
  if (detach_target) x2 = x2.detach();
  auto m = op.apply(x2);
  auto y_tilde = noise ? renoise(m, *noise, *rng) : m;
  return squared_error(x2, f(y_tilde));
}

}  // namespace

torch::Tensor loss_mc(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y) {
  return squared_error(op.apply(f(y)), y);
}

torch::Tensor loss_sure_gaussian(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                                 double sigma, double tau, RandomSource& rng, int probes) {
  if (!(sigma >= 0)) throw ParameterError("sigma must be >= 0");
  if (!(tau > 0)) throw ParameterError("tau must be > 0");
  return sure_gaussian_from(f, op, y, op.apply(f(y)), sigma, tau, rng, probes);
}

torch::Tensor loss_sure_poisson(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                                double gain, double tau, RandomSource& rng, int probes) {
  if (!(gain >= 0)) throw ParameterError("gain must be >= 0");
  if (!(tau > 0)) throw ParameterError("tau must be > 0");
  return sure_poisson_from(f, op, y, op.apply(f(y)), gain, tau, rng, probes);
}

torch::Tensor loss_sure_mixed(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                              double gain, double sigma, double tau, RandomSource& rng, int probes) {
  if (!(gain >= 0) || !(sigma >= 0)) throw ParameterError("gain and sigma must be >= 0");
  if (!(tau > 0)) throw ParameterError("tau must be > 0");
  return sure_mixed_from(f, op, y, op.apply(f(y)), gain, sigma, tau, rng, probes);
}

torch::Tensor loss_ec(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                      const GroupAction& t, bool detach_target) {
  return equivariance_from(f, op, f(y), t, nullptr, nullptr, detach_target);
}

torch::Tensor loss_rec(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                       const GroupAction& t, const NoiseModel& noise, RandomSource& rng, bool detach_target) {
  noise.validate();
  return equivariance_from(f, op, f(y), t, &noise, &rng, detach_target);
}

LossBreakdown loss_share(const Reconstructor& f, const LinearOperator& op, const torch::Tensor& y,
                         const LossSpec& spec, const GroupAction& t, LossRng& rng) {
  spec.validate();
  auto x1 = f(y);
  auto zero = torch::zeros({}, x1.options());
  LossBreakdown out{zero, zero, zero};

  if (spec.has(LossTerm::Mc) || spec.has(LossTerm::Sure)) {
    auto hx = op.apply(x1);
    if (spec.has(LossTerm::Mc)) {
      out.fidelity = squared_error(hx, y);
    } else {
      const auto& n = spec.noise;
      switch (n.kind) {
        case NoiseKind::Gaussian:
          out.fidelity = sure_gaussian_from(f, op, y, hx, n.sigma, spec.tau, rng.probe, spec.probe_count);
          break;
        case NoiseKind::Poisson:
          out.fidelity = sure_poisson_from(f, op, y, hx, n.gain, spec.tau, rng.probe, spec.probe_count);
          break;
        case NoiseKind::Mixed:
          out.fidelity = sure_mixed_from(f, op, y, hx, n.gain, n.sigma, spec.tau, rng.probe, spec.probe_count);
          break;
      }
    }
  }
  torch::Tensor weighted = zero;
  if ((spec.has(LossTerm::Ec) || spec.has(LossTerm::Rec)) && spec.alpha > 0) {
    const bool robust = spec.has(LossTerm::Rec);
    out.equivariance = equivariance_from(f, op, x1, t, robust ? &spec.noise : nullptr,
                                         robust ? &rng.noise : nullptr, spec.detach_target);
    weighted = spec.alpha * out.equivariance;
  }
  out.total = out.fidelity + weighted;
  return out;
}

}  // namespace share
