// share: zero-shot hyperspectral restoration runner.
//
//   share run      --config exp.json [--seed N] [--out DIR] [--device cpu] [--epochs N]
//   share ablate   --config exp.json --axis alpha [--seed N] [--out DIR]
//   share fixtures [--out DIR]
//   share eval     --estimate x.f32 --reference y.f32
//   share eval     --config exp.json --checkpoint model.ckpt [--out DIR]
//
// Exit codes: 0 success, 2 configuration or input error, 3 runtime failure.
// SHARE_OUT overrides the output root named in the config; --out overrides both.

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "share/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::string device = "cpu";
};

fs::path output_root(const Common& c, const share::ExperimentConfig* cfg) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("SHARE_OUT"); env && *env) return env;
  if (cfg) return cfg->output_dir;
  return "share_out";
}

share::ExperimentConfig load_config(const Common& c) {
  if (c.config.empty()) throw share::ConfigError("--config is required");
  auto cfg = share::ExperimentConfig::load(c.config);
  if (c.seed) cfg.train.seed = *c.seed;
  cfg.train.device = c.device;
  cfg.train.validate();
  return cfg;
}

void print_metrics(const share::RunReport& report) { std::cout << report.metrics_block().dump(2) << '\n'; }

int run_command(const Common& c, std::optional<int64_t> epochs) {
  auto cfg = load_config(c);
  if (epochs) {
    cfg.train.epochs = *epochs;
    cfg.train.validate();
  }
  auto out = output_root(c, &cfg);
  cfg.output_dir = out;
  auto outcome = share::run_experiment(cfg, out);
  print_metrics(outcome.report);
  std::cerr << "artifacts written to " << outcome.directory.string() << '\n';
  return 0;
}

int ablate_command(const Common& c, const std::string& axis_arg) {
  auto cfg = load_config(c);
  std::string axis = axis_arg.empty() ? cfg.ablation_axis : axis_arg;
  if (axis.empty()) throw share::ConfigError("no ablation axis given (--axis or ablation.axis)");
  auto axes = share::ablation_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end())
    throw share::ConfigError("unknown ablation axis '" + axis + "'");
  auto out = output_root(c, &cfg);
  auto rows = share::run_ablation(cfg, axis, out);
  int failed = 0;
  for (const auto& r : rows) {
    std::cout << r.label << '\t' << r.status;
    if (r.metrics) std::cout << '\t' << r.metrics->mpsnr << '\t' << r.metrics->mssim << '\t' << r.metrics->sam;
    std::cout << '\n';
    failed += r.status.rfind("failed", 0) == 0;
  }
  std::cerr << "tables written to " << (out / ("ablation_" + axis + ".md")).string() << '\n';
  return failed ? kExitRuntime : 0;
}

int fixtures_command(const Common& c) {
  fs::path out = c.out.empty() ? fs::path("fixtures") : fs::path(c.out);
  auto files = share::make_fixtures(out);
  for (const auto& f : files) std::cout << f.string() << '\n';
  return 0;
}

int eval_command(const Common& c, const std::string& estimate, const std::string& reference,
                 const std::string& checkpoint) {
  if (!estimate.empty() || !reference.empty()) {
    if (estimate.empty() || reference.empty()) throw share::ConfigError("--estimate and --reference go together");
    for (const auto& p : {estimate, reference})
      if (!fs::exists(p)) throw share::ConfigError("input not found: " + p);
    auto m = share::evaluate(share::load_cube(estimate), share::load_cube(reference));
    std::cout << m.to_json().dump(2) << '\n';
    return 0;
  }
  if (checkpoint.empty()) throw share::ConfigError("eval needs --estimate/--reference or --config/--checkpoint");
  if (!fs::exists(checkpoint)) throw share::ConfigError("input not found: " + checkpoint);
  auto cfg = load_config(c);
  auto problem = share::prepare_problem(cfg);
  auto net = share::load_checkpoint(checkpoint);
  json results = json::array();
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < problem.measurements.size(); ++i) {
    auto xhat = share::restore(net, *problem.op, problem.measurements[i].unsqueeze(0)).squeeze(0);
    json entry = {{"index", i}};
    if (problem.references) {
      entry["metrics"] = share::evaluate(xhat, (*problem.references)[i]).to_json();
      entry["baseline"] =
          share::evaluate(problem.op->pseudo_inverse(problem.measurements[i]), (*problem.references)[i]).to_json();
    }
    if (!c.out.empty()) {
      fs::create_directories(c.out);
      auto name = "xhat_" + std::to_string(i) + ".f32";
      share::save_cube(problem.templates[i].with_data(xhat.contiguous()), fs::path(c.out) / name,
                       share::CubeFormat::RawF32Json);
      entry["output"] = name;
    }
    results.push_back(entry);
  }
  std::cout << results.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot hyperspectral restoration with SURE and robust equivariance"};
  app.require_subcommand(1);
  Common common;
  std::optional<int64_t> epochs;
  std::string axis, estimate, reference, checkpoint;

  auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) sub->add_option("--config", common.config, "experiment config (JSON)");
    sub->add_option("--seed", common.seed, "training seed override");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--device", common.device, "compute device")->capture_default_str();
  };
  auto* run = app.add_subcommand("run", "train on one experiment and write artifacts");
  add_common(run, true);
  run->add_option("--epochs", epochs, "override train.epochs");
  auto* ablate = app.add_subcommand("ablate", "one run per value of an ablation axis");
  add_common(ablate, true);
  ablate->add_option("--axis", axis, "transform | alpha | loss-terms | noise | dasa");
  auto* fixtures = app.add_subcommand("fixtures", "write the deterministic acceptance fixtures");
  add_common(fixtures, false);
  auto* eval = app.add_subcommand("eval", "metrics of an estimate, or of a checkpoint on a config");
  add_common(eval, true);
  eval->add_option("--estimate", estimate, "estimated cube");
  eval->add_option("--reference", reference, "reference cube");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return run_command(common, epochs);
    if (*ablate) return ablate_command(common, axis);
    if (*fixtures) return fixtures_command(common);
    if (*eval) return eval_command(common, estimate, reference, checkpoint);
  } catch (const share::ConfigError& e) {
    std::cerr << "share: " << e.what() << '\n';
    return kExitConfig;
  } catch (const share::TrainingDiverged& e) {
    std::cerr << "share: training diverged: " << e.what() << " (partial artifacts kept)\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "share: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
