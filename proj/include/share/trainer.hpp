#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "share/losses.hpp"
#include "share/metrics.hpp"
#include "share/network.hpp"
#include "share/physics.hpp"
#include "share/transforms.hpp"

namespace share {

enum class TrainMode { SingleImage, MultiImage };

TrainMode parse_train_mode(std::string_view name);
std::string to_string(TrainMode mode);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int64_t epochs = 2000;
  double lr_init = 1e-3;
  double lr_final = 1e-4;
  std::string optimizer = "adam";
  AdamSettings adam;
  LossSpec loss;
  TransformKind transform_kind = TransformKind::Shift;
  SamplerRanges transform_ranges;
  int transforms_per_step = 1;
  NetworkConfig net;
  uint64_t seed = 0;
  /// Write a checkpoint every k steps into checkpoint_dir (0 disables).
  int64_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  /// JSON-lines trajectory, appended one record per step (empty disables).
  std::filesystem::path log_path;
  TrainMode mode = TrainMode::SingleImage;
  /// Measurements per step in multi-image mode.
  int64_t batch_size = 1;
  int64_t divergence_patience = 5;
  std::string device = "cpu";

  /// Throws ConfigError: epochs >= 1, 0 < lr_final <= lr_init, adam only.
  void validate() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Cosine decay from lr_init at step 0 to lr_final at step epochs - 1.
double cosine_lr(int64_t step, int64_t epochs, double lr_init, double lr_final);

struct EpochRecord {
  int64_t step = 0;
  double total = 0.0;
  double fidelity = 0.0;
  double equivariance = 0.0;
  double lr = 0.0;

  nlohmann::json to_json() const;
};

struct RunReport {
  nlohmann::json config;
  std::vector<EpochRecord> trajectory;
  int64_t best_step = -1;
  double best_loss = 0.0;
  std::string status = "ok";  // ok | diverged
  std::optional<Metrics> best_metrics;      // f(y) at the best-loss parameters
  std::optional<Metrics> final_metrics;     // f(y) at the last parameters
  std::optional<Metrics> baseline_metrics;  // H^+ y
  double wall_time = 0.0;
  nlohmann::json artifacts = nlohmann::json::object();

  /// The deterministic part of the report: metrics and loss summary, no timings.
  nlohmann::json metrics_block() const;
  nlohmann::json to_json() const;
};

struct TrainResult {
  ShareNet net{nullptr};      // holds the best-loss parameters
  torch::Tensor output;       // f(y) at the best-loss parameters, [c, H, W] or [N, c, H, W]
  torch::Tensor final_output; // f(y) at the last parameters
  RunReport report;
};

/// Raised when the loss stays non-finite for `divergence_patience` steps. The
/// result holds the last good (best-loss) parameters and their output.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, TrainResult result)
      : DivergenceError(what), result_(std::move(result)) {}
  const TrainResult& result() const { return result_; }

 private:
  TrainResult result_;
};

/// Zero-shot restoration of one measurement y ([c, h, w]). If a reference
/// cube is given the report carries best/final/baseline metrics.
TrainResult restore_single(const torch::Tensor& y, const LinearOperator& op, const TrainConfig& cfg,
                           const std::optional<torch::Tensor>& reference = std::nullopt);

/// Trains one network over several same-shape measurements, drawing a
/// minibatch of cfg.batch_size of them per step. Outputs are [N, c, H, W].
TrainResult restore_multi(const std::vector<torch::Tensor>& measurements, const LinearOperator& op,
                          const TrainConfig& cfg,
                          const std::optional<std::vector<torch::Tensor>>& references = std::nullopt);

}  // namespace share
