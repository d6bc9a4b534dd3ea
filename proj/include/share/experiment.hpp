#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "share/io.hpp"
#include "share/prep.hpp"
#include "share/trainer.hpp"

namespace share {

inline constexpr int kSchemaVersion = 1;

enum class Task { Inpaint, SuperResolution };

Task parse_task(std::string_view name);
std::string to_string(Task task);

struct InputSpec {
  std::vector<std::filesystem::path> paths;
  std::optional<CubeFormat> format;  // inferred from the extension when absent
  std::string variable;              // MAT-file variable name
  /// true: the files are already-degraded measurements; false: clean cubes
  /// that are degraded and corrupted with `noise` before training.
  bool is_measurement = false;
  /// Optional ground truth for measurement inputs (one per path).
  std::vector<std::filesystem::path> references;
};

struct MaskSpec {
  std::filesystem::path path;  // load when set, otherwise generate
  ColumnPattern pattern = ColumnPattern::Random;
  double ratio = 0.25;
};

struct SrSpec {
  nlohmann::json kernel = {{"type", "gaussian"}, {"size", 7}, {"std", 1.0}};
  int64_t factor = 2;
  PadMode boundary = PadMode::Reflect;
  PinvMode pinv = PinvMode::Bicubic;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  Task task = Task::Inpaint;
  InputSpec input;
  NormalizeMode normalize;
  std::optional<Rect> crop;
  std::vector<int64_t> bands;  // empty: all bands
  MaskSpec mask;
  SrSpec sr;
  /// Measurement noise; also the noise model handed to the loss.
  NoiseModel noise{NoiseKind::Gaussian, 25.0 / 255.0, 1.0};
  /// Seeds the simulated mask and measurement noise, independent of training.
  uint64_t data_seed = 0;
  TrainConfig train;
  std::filesystem::path output_dir = "share_out";
  std::vector<int64_t> visualize_bands;  // empty: first, middle and last band
  std::string ablation_axis;
  nlohmann::json ablation_values;  // null: the axis defaults

  /// Relative input paths are resolved against base_dir.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Fully resolved document (absolute input paths); running it again
  /// reproduces the experiment.
  nlohmann::json to_json() const;
};

/// The degradation operator, measurements and optional references of an experiment.
struct Problem {
  std::unique_ptr<LinearOperator> op;
  std::vector<torch::Tensor> measurements;
  std::optional<std::vector<torch::Tensor>> references;
  std::vector<HsiCube> templates;  // metadata carriers for the output cubes
};

/// Throws ConfigError("input not found: ...") for missing files.
Problem prepare_problem(const ExperimentConfig& cfg);

struct RunOutcome {
  RunReport report;
  std::filesystem::path directory;
};

/// Full run: prepares the problem, trains, writes xhat cube(s), report.json,
/// loss.jsonl, config.json, model.ckpt and band/error PNGs into out_dir.
/// On divergence the partial artifacts are written and TrainingDiverged is rethrown.
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct AblationRow {
  std::string label;
  std::string status;  // "ok" or the failure message
  std::optional<Metrics> metrics;
};

std::vector<std::string> ablation_axes();
/// The values enumerated for an axis when the config gives none.
nlohmann::json default_ablation_values(const std::string& axis);
/// Copy of cfg with one axis value applied.
ExperimentConfig apply_ablation_value(const ExperimentConfig& cfg, const std::string& axis,
                                      const nlohmann::json& value);
std::string ablation_label(const std::string& axis, const nlohmann::json& value);

/// One run per axis value with the shared seed; writes ablation_<axis>.csv
/// and ablation_<axis>.md into out_dir. Failed runs become rows with a status.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const std::string& axis,
                                      const std::filesystem::path& out_dir);

struct FixtureOptions {
  int64_t bands = 8;
  int64_t height = 64;
  int64_t width = 64;
  std::vector<int64_t> ranks = {1, 2, 4};
  uint64_t seed = 2024;
};

/// Deterministic acceptance inputs: low-rank cubes, the four benchmark column
/// masks, SR kernels, toy configs and a manifest. Returns the written paths.
std::vector<std::filesystem::path> make_fixtures(const std::filesystem::path& out_dir,
                                                 const FixtureOptions& options = {});

/// Grayscale 8-bit PNG.
void write_png_gray(const std::filesystem::path& path, const std::vector<uint8_t>& pixels, int64_t height,
                    int64_t width);

}  // namespace share
