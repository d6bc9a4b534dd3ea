#include "share/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json_keys.hpp"

namespace share {

using nlohmann::json;

TrainMode parse_train_mode(std::string_view name) {
  if (name == "single-image" || name == "single") return TrainMode::SingleImage;
  if (name == "multi-image" || name == "multi") return TrainMode::MultiImage;
  throw ConfigError("unknown training mode '" + std::string(name) + "'");
}

std::string to_string(TrainMode mode) {
  return mode == TrainMode::SingleImage ? "single-image" : "multi-image";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr_final > 0) || !(lr_final <= lr_init) || !std::isfinite(lr_init))
    throw ConfigError("learning rates need 0 < lr_final <= lr_init");
  if (optimizer != "adam") throw ConfigError("unsupported optimizer '" + optimizer + "'");
  if (transforms_per_step < 1) throw ConfigError("transforms_per_step must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (divergence_patience < 1) throw ConfigError("divergence_patience must be >= 1");
  if (device != "cpu") throw ConfigError("device '" + device + "' is not available in this build");
  try {
    loss.validate();
  } catch (const SpecError& e) {
    throw ConfigError(std::string("loss: ") + e.what());
  }
  net.validate();
}

namespace {

json ranges_to_json(const SamplerRanges& r) {
  return {{"scale_lo", r.scale_lo}, {"scale_hi", r.scale_hi}, {"angle_deg", r.angle_deg},
          {"translate_frac", r.translate_frac}, {"shear", r.shear}, {"pan_tilt_deg", r.pan_tilt_deg}};
}

SamplerRanges ranges_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"scale_lo", "scale_hi", "angle_deg", "translate_frac", "shear", "pan_tilt_deg"},
                              "train.transform_ranges");
  SamplerRanges r;
  r.scale_lo = j.value("scale_lo", r.scale_lo);
  r.scale_hi = j.value("scale_hi", r.scale_hi);
  r.angle_deg = j.value("angle_deg", r.angle_deg);
  r.translate_frac = j.value("translate_frac", r.translate_frac);
  r.shear = j.value("shear", r.shear);
  r.pan_tilt_deg = j.value("pan_tilt_deg", r.pan_tilt_deg);
  return r;
}

}  // namespace

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"lr_init", lr_init},
          {"lr_final", lr_final},
          {"optimizer", optimizer},
          {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
          {"loss", loss.to_json()},
          {"transform", to_string(transform_kind)},
          {"transform_ranges", ranges_to_json(transform_ranges)},
          {"transforms_per_step", transforms_per_step},
          {"net", net.to_json()},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"mode", to_string(mode)},
          {"batch_size", batch_size},
          {"divergence_patience", divergence_patience},
          {"device", device}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    detail::reject_unknown_keys(j,
                                {"epochs", "lr_init", "lr_final", "optimizer", "adam", "loss", "transform",
                                 "transform_ranges", "transforms_per_step", "net", "seed", "checkpoint_every",
                                 "mode", "batch_size", "divergence_patience", "device"},
                                "train");
    c.epochs = j.value("epochs", c.epochs);
    c.lr_init = j.value("lr_init", c.lr_init);
    c.lr_final = j.value("lr_final", c.lr_final);
    c.optimizer = j.value("optimizer", c.optimizer);
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      detail::reject_unknown_keys(a, {"beta1", "beta2", "eps"}, "train.adam");
      c.adam.beta1 = a.value("beta1", c.adam.beta1);
      c.adam.beta2 = a.value("beta2", c.adam.beta2);
      c.adam.eps = a.value("eps", c.adam.eps);
    }
    if (j.contains("loss")) c.loss = LossSpec::from_json(j.at("loss"));
    if (j.contains("transform")) c.transform_kind = parse_transform_kind(j.at("transform").get<std::string>());
    if (j.contains("transform_ranges")) c.transform_ranges = ranges_from_json(j.at("transform_ranges"));
    c.transforms_per_step = j.value("transforms_per_step", c.transforms_per_step);
    if (j.contains("net")) c.net = NetworkConfig::from_json(j.at("net"));
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    if (j.contains("mode")) c.mode = parse_train_mode(j.at("mode").get<std::string>());
    c.batch_size = j.value("batch_size", c.batch_size);
    c.divergence_patience = j.value("divergence_patience", c.divergence_patience);
    c.device = j.value("device", c.device);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

double cosine_lr(int64_t step, int64_t epochs, double lr_init, double lr_final) {
  if (epochs <= 1) return lr_final;
  const double t = static_cast<double>(step) / static_cast<double>(epochs - 1);
  return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + std::cos(std::numbers::pi * t));
}

json EpochRecord::to_json() const {
  return {{"step", step}, {"total", total}, {"fidelity", fidelity}, {"equivariance", equivariance}, {"lr", lr}};
}

json RunReport::metrics_block() const {
  json m = {{"best_step", best_step}, {"best_loss", best_loss}, {"status", status}};
  m["final_loss"] = trajectory.empty() ? 0.0 : trajectory.back().total;
  if (best_metrics) m["best"] = best_metrics->to_json();
  if (final_metrics) m["final"] = final_metrics->to_json();
  if (baseline_metrics) m["baseline"] = baseline_metrics->to_json();
  return m;
}

json RunReport::to_json() const {
  json traj = json::array();
  for (const auto& r : trajectory) traj.push_back(r.to_json());
  return {{"config", config}, {"metrics", metrics_block()}, {"trajectory", traj},
          {"wall_time_s", wall_time}, {"artifacts", artifacts}};
}

namespace {

Metrics mean_metrics(const torch::Tensor& estimate, const std::vector<torch::Tensor>& refs) {
  Metrics acc;
  for (size_t i = 0; i < refs.size(); ++i) {
    auto m = evaluate(estimate[static_cast<int64_t>(i)], refs[i]);
    acc.mpsnr += m.mpsnr;
    acc.mssim += m.mssim;
    acc.sam += m.sam;
  }
  const double n = static_cast<double>(refs.size());
  return {acc.mpsnr / n, acc.mssim / n, acc.sam / n};
}

double scalar(const torch::Tensor& t) { return t.item<double>(); }

// Shared optimisation loop over a stack of measurements ys ([N, c, h, w]).
TrainResult train(const torch::Tensor& ys, const LinearOperator& op, const TrainConfig& cfg,
                  const std::vector<torch::Tensor>* references) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const int64_t count = ys.size(0);
  const int64_t batch = std::min<int64_t>(cfg.batch_size, count);

  const auto [H, W] = op.signal_size(ys.size(2), ys.size(3));
  NetworkConfig net_cfg = cfg.net;
  net_cfg.init_seed = cfg.seed;
  if (net_cfg.bands != ys.size(1))
    throw ConfigError("network bands (" + std::to_string(net_cfg.bands) + ") differ from measurement bands (" +
                      std::to_string(ys.size(1)) + ")");
  net_cfg.validate(H, W);

  TrainConfig effective = cfg;
  effective.net = net_cfg;

  ShareNet net = make_network(net_cfg);
  net->train();

  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(cfg.lr_init)
                                                      .betas({cfg.adam.beta1, cfg.adam.beta2})
                                                      .eps(cfg.adam.eps));

  Reconstructor f = [&](const torch::Tensor& y) { return net->forward(op.pseudo_inverse(y)); };

  LossRng loss_rng(cfg.seed);
  RandomSource transform_rng(cfg.seed, "transform");
  RandomSource batch_rng(cfg.seed, "batch");

  LossSpec extra_spec = cfg.loss;
  extra_spec.terms.clear();
  for (auto t : cfg.loss.terms)
    if (t == LossTerm::Ec || t == LossTerm::Rec) extra_spec.terms.push_back(t);

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path, std::ios::trunc);
    if (!log) throw Error("cannot open log file " + cfg.log_path.string());
  }

  RunReport report;
  report.config = effective.to_json();
  report.trajectory.reserve(static_cast<size_t>(cfg.epochs));

  std::vector<torch::Tensor> best_snapshot = snapshot_parameters(net);
  double best_loss = std::numeric_limits<double>::infinity();
  int64_t best_step = -1;
  int64_t bad_steps = 0;
  bool diverged = false;

  for (int64_t step = 0; step < cfg.epochs; ++step) {
    const double lr = cosine_lr(step, cfg.epochs, cfg.lr_init, cfg.lr_final);
    for (auto& group : optimizer.param_groups())
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

    torch::Tensor y = ys;
    if (count > 1 && batch < count) {
      auto order = torch::randperm(count, batch_rng.generator(), torch::kLong);
      y = ys.index_select(0, order.slice(0, 0, batch));
    }

    auto t = sample(cfg.transform_kind, transform_rng, H, W, cfg.transform_ranges);
    LossBreakdown parts = loss_share(f, op, y, cfg.loss, t, loss_rng);
    if (cfg.transforms_per_step > 1 && !extra_spec.terms.empty() && cfg.loss.alpha > 0) {
      auto eq = parts.equivariance;
      for (int k = 1; k < cfg.transforms_per_step; ++k) {
        auto tk = sample(cfg.transform_kind, transform_rng, H, W, cfg.transform_ranges);
        eq = eq + loss_share(f, op, y, extra_spec, tk, loss_rng).equivariance;
      }
      parts.equivariance = eq / static_cast<double>(cfg.transforms_per_step);
      parts.total = parts.fidelity + cfg.loss.alpha * parts.equivariance;
    }

    EpochRecord rec{step, scalar(parts.total), scalar(parts.fidelity), scalar(parts.equivariance), lr};
    report.trajectory.push_back(rec);
    if (log) log << rec.to_json().dump() << '\n' << std::flush;

    if (!std::isfinite(rec.total)) {
      if (++bad_steps >= cfg.divergence_patience) {
        diverged = true;
        break;
      }
      continue;
    }
    bad_steps = 0;
    if (rec.total < best_loss) {
      best_loss = rec.total;
      best_step = step;
      best_snapshot = snapshot_parameters(net);
    }

    optimizer.zero_grad();
    parts.total.backward();
    optimizer.step();

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() && (step + 1) % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_checkpoint(net, cfg.checkpoint_dir / ("step_" + std::to_string(step + 1) + ".ckpt"),
                      {{"step", step + 1}});
    }
  }

  TrainResult result;
  {
    torch::NoGradGuard guard;
    result.final_output = f(ys).detach();
    restore_parameters(net, best_snapshot);
    result.output = f(ys).detach();
  }
  result.net = net;

  report.best_step = best_step;
  report.best_loss = best_step >= 0 ? best_loss : 0.0;
  report.status = diverged ? "diverged" : "ok";
  if (references) {
    torch::NoGradGuard guard;
    report.best_metrics = mean_metrics(result.output, *references);
    report.final_metrics = mean_metrics(result.final_output, *references);
    report.baseline_metrics = mean_metrics(op.pseudo_inverse(ys), *references);
  }
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.report = std::move(report);

  if (diverged) {
    throw TrainingDiverged("loss was non-finite for " + std::to_string(cfg.divergence_patience) +
                               " consecutive steps",
                           std::move(result));
  }
  return result;
}

torch::Tensor as_measurement(const torch::Tensor& y) {
  if (y.dim() != 3) throw ShapeError("measurement must be [bands, height, width]");
  return y.detach().to(torch::kFloat32).contiguous();
}

}  // namespace

TrainResult restore_single(const torch::Tensor& y, const LinearOperator& op, const TrainConfig& cfg,
                           const std::optional<torch::Tensor>& reference) {
  std::vector<torch::Tensor> refs;
  if (reference) refs.push_back(*reference);
  auto result = [&] {
    try {
      return train(as_measurement(y).unsqueeze(0), op, cfg, reference ? &refs : nullptr);
    } catch (const TrainingDiverged& e) {
      TrainResult r = e.result();
      r.output = r.output.squeeze(0);
      r.final_output = r.final_output.squeeze(0);
      throw TrainingDiverged(e.what(), std::move(r));
    }
  }();
  result.output = result.output.squeeze(0);
  result.final_output = result.final_output.squeeze(0);
  return result;
}

TrainResult restore_multi(const std::vector<torch::Tensor>& measurements, const LinearOperator& op,
                          const TrainConfig& cfg, const std::optional<std::vector<torch::Tensor>>& references) {
  if (measurements.empty()) throw ShapeError("restore_multi needs at least one measurement");
  std::vector<torch::Tensor> ys;
  for (const auto& m : measurements) {
    auto y = as_measurement(m);
    if (y.sizes() != measurements.front().sizes()) throw ShapeError("all measurements must share a shape");
    ys.push_back(y);
  }
  if (references && references->size() != measurements.size())
    throw ShapeError("one reference per measurement is required");
  return train(torch::stack(ys), op, cfg, references ? &*references : nullptr);
}

}  // namespace share
