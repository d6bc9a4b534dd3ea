#include "share/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json_keys.hpp"

namespace share {

namespace fs = std::filesystem;
using nlohmann::json;

Task parse_task(std::string_view name) {
  if (name == "inpaint") return Task::Inpaint;
  if (name == "sr") return Task::SuperResolution;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

std::string to_string(Task task) { return task == Task::Inpaint ? "inpaint" : "sr"; }

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

fs::path absolute_path(const fs::path& p) { return p.empty() ? p : fs::absolute(p).lexically_normal(); }

using detail::reject_unknown_keys;

std::string normalize_name(NormalizeKind k) {
  switch (k) {
    case NormalizeKind::GlobalMinMax: return "global-minmax";
    case NormalizeKind::PerBandMinMax: return "per-band-minmax";
    case NormalizeKind::FixedRange: return "fixed-range";
  }
  return "?";
}

std::vector<fs::path> path_list(const json& j, const fs::path& base) {
  std::vector<fs::path> out;
  if (j.is_string()) {
    out.push_back(resolve(j.get<std::string>(), base));
  } else {
    for (const auto& p : j) out.push_back(resolve(p.get<std::string>(), base));
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    reject_unknown_keys(j,
                        {"schema_version", "task", "input", "preprocess", "mask", "sr", "noise", "data_seed",
                         "train", "output_dir", "visualize", "ablation"},
                        "experiment config");
    c.schema_version = j.value("schema_version", 0);
    if (c.schema_version != kSchemaVersion)
      throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version) + " (expected " +
                        std::to_string(kSchemaVersion) + ")");
    c.task = parse_task(j.at("task").get<std::string>());

    const auto& in = j.at("input");
    reject_unknown_keys(in, {"path", "paths", "format", "variable", "measurement", "references"}, "input");
    if (in.contains("paths")) c.input.paths = path_list(in.at("paths"), base_dir);
    else if (in.contains("path")) c.input.paths = path_list(in.at("path"), base_dir);
    if (c.input.paths.empty()) throw ConfigError("input needs at least one path");
    if (in.contains("format")) c.input.format = parse_cube_format(in.at("format").get<std::string>());
    c.input.variable = in.value("variable", std::string());
    c.input.is_measurement = in.value("measurement", false);
    if (in.contains("references")) c.input.references = path_list(in.at("references"), base_dir);
    if (!c.input.references.empty() && c.input.references.size() != c.input.paths.size())
      throw ConfigError("input.references must list one file per input path");

    if (j.contains("preprocess")) {
      const auto& pp = j.at("preprocess");
      reject_unknown_keys(pp, {"normalize", "crop", "bands"}, "preprocess");
      if (pp.contains("normalize")) {
        const auto& n = pp.at("normalize");
        if (n.is_string()) {
          c.normalize.kind = parse_normalize_kind(n.get<std::string>());
        } else {
          c.normalize.kind = parse_normalize_kind(n.at("kind").get<std::string>());
          c.normalize.lo = n.value("lo", c.normalize.lo);
          c.normalize.hi = n.value("hi", c.normalize.hi);
        }
      }
      if (pp.contains("crop")) {
        const auto& r = pp.at("crop");
        c.crop = Rect{r.at("top").get<int64_t>(), r.at("left").get<int64_t>(), r.at("height").get<int64_t>(),
                      r.at("width").get<int64_t>()};
      }
      if (pp.contains("bands")) c.bands = pp.at("bands").get<std::vector<int64_t>>();
    }

    if (j.contains("mask")) {
      const auto& m = j.at("mask");
      reject_unknown_keys(m, {"path", "pattern", "ratio"}, "mask");
      if (m.contains("path")) c.mask.path = resolve(m.at("path").get<std::string>(), base_dir);
      if (m.contains("pattern")) c.mask.pattern = parse_column_pattern(m.at("pattern").get<std::string>());
      c.mask.ratio = m.value("ratio", c.mask.ratio);
    }
    if (j.contains("sr")) {
      const auto& s = j.at("sr");
      reject_unknown_keys(s, {"kernel", "factor", "boundary", "pinv"}, "sr");
      if (s.contains("kernel")) {
        c.sr.kernel = s.at("kernel");
        if (c.sr.kernel.contains("path"))
          c.sr.kernel = read_json(resolve(c.sr.kernel.at("path").get<std::string>(), base_dir));
      }
      c.sr.factor = s.value("factor", c.sr.factor);
      if (s.contains("boundary")) c.sr.boundary = parse_pad_mode(s.at("boundary").get<std::string>());
      if (s.contains("pinv")) c.sr.pinv = parse_pinv_mode(s.at("pinv").get<std::string>());
    }
    if (j.contains("noise")) c.noise = NoiseModel::from_json(j.at("noise"));
    c.data_seed = j.value("data_seed", c.data_seed);

    json train = j.value("train", json::object());
    if (train.contains("loss") && train.at("loss").contains("noise"))
      throw ConfigError("train.loss.noise is taken from the top-level noise block; remove it");
    c.train = TrainConfig::from_json(train);
    c.train.loss.noise = c.noise;

    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("visualize")) c.visualize_bands = j.at("visualize").value("bands", std::vector<int64_t>{});
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      reject_unknown_keys(a, {"axis", "values"}, "ablation");
      c.ablation_axis = a.value("axis", std::string());
      c.ablation_values = a.value("values", json());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("input not found: config " + path.string());
  json j;
  try {
    j = read_json(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  }
  return from_json(j, absolute_path(path).parent_path());
}

json ExperimentConfig::to_json() const {
  json in = {{"measurement", input.is_measurement}};
  json paths = json::array();
  for (const auto& p : input.paths) paths.push_back(absolute_path(p).string());
  in["paths"] = paths;
  if (input.format) in["format"] = share::to_string(*input.format);
  if (!input.variable.empty()) in["variable"] = input.variable;
  if (!input.references.empty()) {
    json refs = json::array();
    for (const auto& p : input.references) refs.push_back(absolute_path(p).string());
    in["references"] = refs;
  }

  json pp = {{"normalize", {{"kind", normalize_name(normalize.kind)}, {"lo", normalize.lo}, {"hi", normalize.hi}}}};
  if (crop) pp["crop"] = {{"top", crop->top}, {"left", crop->left}, {"height", crop->height}, {"width", crop->width}};
  if (!bands.empty()) pp["bands"] = bands;

  json mask_j = {{"pattern", share::to_string(mask.pattern)}, {"ratio", mask.ratio}};
  if (!mask.path.empty()) mask_j["path"] = absolute_path(mask.path).string();

  json train_j = train.to_json();
  train_j["loss"].erase("noise");

  json j = {{"schema_version", schema_version},
            {"task", share::to_string(task)},
            {"input", in},
            {"preprocess", pp},
            {"mask", mask_j},
            {"sr",
             {{"kernel", sr.kernel},
              {"factor", sr.factor},
              {"boundary", share::to_string(sr.boundary)},
              {"pinv", share::to_string(sr.pinv)}}},
            {"noise", noise.to_json()},
            {"data_seed", data_seed},
            {"train", train_j},
            {"output_dir", output_dir.string()}};
  if (!visualize_bands.empty()) j["visualize"] = {{"bands", visualize_bands}};
  if (!ablation_axis.empty()) j["ablation"] = {{"axis", ablation_axis}, {"values", ablation_values}};
  return j;
}

// --- problem ------------------------------------------------------------------

namespace {

HsiCube read_input(const fs::path& path, const ExperimentConfig& cfg) {
  if (!fs::exists(path)) throw ConfigError("input not found: " + path.string());
  return cfg.input.format ? load_cube(path, *cfg.input.format, cfg.input.variable) : load_cube(path);
}

HsiCube select(const HsiCube& cube, const ExperimentConfig& cfg) {
  if (!cfg.crop && cfg.bands.empty()) return cube;
  Rect r = cfg.crop ? *cfg.crop : full_extent(cube);
  return crop_and_select(cube, r, cfg.bands.empty() ? all_bands(cube.bands()) : cfg.bands);
}

HsiCube preprocess(const HsiCube& cube, const ExperimentConfig& cfg) { return normalize(select(cube, cfg), cfg.normalize); }

}  // namespace

Problem prepare_problem(const ExperimentConfig& cfg) {
  Problem p;
  std::vector<HsiCube> cubes;
  for (const auto& path : cfg.input.paths) cubes.push_back(preprocess(read_input(path, cfg), cfg));
  for (const auto& c : cubes)
    if (c.data().sizes() != cubes.front().data().sizes()) throw ConfigError("all inputs must share a shape");
  const auto& first = cubes.front();

  if (cfg.task == Task::Inpaint) {
    torch::Tensor mask;
    if (!cfg.mask.path.empty()) {
      if (!fs::exists(cfg.mask.path)) throw ConfigError("input not found: " + cfg.mask.path.string());
      mask = select(load_mask(cfg.mask.path), cfg).data();
    } else {
      RandomSource rng(cfg.data_seed, "mask");
      mask = column_mask(first.bands(), first.height(), first.width(), cfg.mask.ratio, cfg.mask.pattern, rng);
    }
    p.op = std::make_unique<InpaintOperator>(mask);
  } else {
    p.op = std::make_unique<BlurDownsampleOperator>(kernel_from_json(cfg.sr.kernel), cfg.sr.factor, cfg.sr.boundary,
                                                    cfg.sr.pinv);
  }

  if (cfg.input.is_measurement) {
    for (const auto& c : cubes) p.measurements.push_back(c.data());
    if (!cfg.input.references.empty()) {
      std::vector<torch::Tensor> refs;
      for (const auto& path : cfg.input.references) refs.push_back(preprocess(read_input(path, cfg), cfg).data());
      p.references = refs;
    }
    const auto [H, W] = p.op->signal_size(first.height(), first.width());
    for (const auto& c : cubes)
      p.templates.emplace_back(torch::zeros({c.bands(), H, W}), c.range(), c.wavelengths(), c.name(), c.band_ranges());
  } else {
    std::vector<torch::Tensor> refs;
    for (size_t i = 0; i < cubes.size(); ++i) {
      RandomSource rng(cfg.data_seed, "measurement/" + std::to_string(i));
      torch::NoGradGuard no_grad;
      p.measurements.push_back(corrupt(p.op->apply(cubes[i].data()), cfg.noise, rng));
      refs.push_back(cubes[i].data());
      p.templates.push_back(cubes[i]);
    }
    p.references = refs;
  }
  return p;
}

// --- run ----------------------------------------------------------------------

namespace {

std::vector<uint8_t> stretch(const torch::Tensor& band, double lo, double hi) {
  auto b = band.to(torch::kFloat64).contiguous();
  const double* v = b.data_ptr<double>();
  std::vector<uint8_t> out(static_cast<size_t>(b.numel()));
  const double span = hi > lo ? hi - lo : 1.0;
  for (size_t i = 0; i < out.size(); ++i) {
    double t = std::clamp((v[i] - lo) / span, 0.0, 1.0);
    out[i] = static_cast<uint8_t>(std::lround(t * 255.0));
  }
  return out;
}

std::vector<int64_t> bands_to_show(const ExperimentConfig& cfg, int64_t bands) {
  std::vector<int64_t> chosen = cfg.visualize_bands;
  if (chosen.empty()) chosen = {0, bands / 2, bands - 1};
  std::vector<int64_t> out;
  for (auto b : chosen) {
    if (b < 0 || b >= bands) throw ConfigError("visualize band " + std::to_string(b) + " out of range");
    if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
  }
  return out;
}

// Band images of one estimate; min-max stretch ranges go into the returned sidecar.
json write_band_images(const fs::path& dir, const std::string& prefix, const torch::Tensor& xhat,
                       const torch::Tensor* reference, const std::vector<int64_t>& bands, json& artifacts) {
  json vis = json::array();
  for (auto b : bands) {
    auto band = xhat[b];
    const double lo = band.min().item<double>(), hi = band.max().item<double>();
    std::ostringstream name;
    name << prefix << "band_" << std::setw(3) << std::setfill('0') << b << ".png";
    write_png_gray(dir / name.str(), stretch(band, lo, hi), band.size(0), band.size(1));
    artifacts.push_back(name.str());
    json entry = {{"band", b}, {"image", name.str()}, {"min", lo}, {"max", hi}};
    if (reference) {
      auto err = (band - (*reference)[b]).abs();
      const double emax = err.max().item<double>();
      std::ostringstream ename;
      ename << prefix << "error_" << std::setw(3) << std::setfill('0') << b << ".png";
      write_png_gray(dir / ename.str(), stretch(err, 0.0, emax), err.size(0), err.size(1));
      artifacts.push_back(ename.str());
      entry["error_image"] = ename.str();
      entry["error_max"] = emax;
    }
    vis.push_back(entry);
  }
  return vis;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  Problem problem = prepare_problem(cfg);
  fs::create_directories(out_dir);
  write_json(cfg.to_json(), out_dir / "config.json");

  TrainConfig tc = cfg.train;
  tc.loss.noise = cfg.noise;
  tc.net.bands = problem.measurements.front().size(0);
  tc.log_path = out_dir / "loss.jsonl";
  if (tc.checkpoint_every > 0) tc.checkpoint_dir = out_dir / "checkpoints";

  const bool multi = tc.mode == TrainMode::MultiImage;
  if (!multi && problem.measurements.size() != 1)
    throw ConfigError("single-image mode takes exactly one input; set train.mode to multi-image");

  TrainResult result;
  std::optional<TrainingDiverged> diverged;
  try {
    if (multi) {
      result = restore_multi(problem.measurements, *problem.op, tc, problem.references);
    } else {
      std::optional<torch::Tensor> ref;
      if (problem.references) ref = problem.references->front();
      result = restore_single(problem.measurements.front(), *problem.op, tc, ref);
    }
  } catch (const TrainingDiverged& e) {
    diverged.emplace(e);
    result = e.result();
  }

  RunReport& report = result.report;
  report.config = cfg.to_json();
  json artifacts = json::array({"config.json", "loss.jsonl"});

  auto outputs = multi ? result.output : result.output.unsqueeze(0);
  json vis = json::array();
  for (int64_t i = 0; i < outputs.size(0); ++i) {
    const std::string suffix = multi ? "_" + std::to_string(i) : "";
    const std::string name = "xhat" + suffix + ".f32";
    save_cube(problem.templates[static_cast<size_t>(i)].with_data(outputs[i].contiguous()), out_dir / name,
              CubeFormat::RawF32Json);
    artifacts.push_back(name);
    artifacts.push_back(sidecar_path(name).string());
    const torch::Tensor* ref = problem.references ? &(*problem.references)[static_cast<size_t>(i)] : nullptr;
    auto entries = write_band_images(out_dir, multi ? "image_" + std::to_string(i) + "_" : "", outputs[i], ref,
                                     bands_to_show(cfg, outputs.size(1)), artifacts);
    for (auto& e : entries) vis.push_back(e);
  }
  write_json(vis, out_dir / "band_images.json");
  artifacts.push_back("band_images.json");

  save_checkpoint(result.net, out_dir / "model.ckpt", {{"experiment", cfg.to_json()}, {"best_step", report.best_step}});
  artifacts.push_back("model.ckpt");
  artifacts.push_back("report.json");
  report.artifacts = artifacts;
  write_json(report.to_json(), out_dir / "report.json");

  if (diverged) throw *diverged;
  return {report, out_dir};
}

// --- ablation -----------------------------------------------------------------

std::vector<std::string> ablation_axes() { return {"transform", "alpha", "loss-terms", "noise", "dasa"}; }

json default_ablation_values(const std::string& axis) {
  if (axis == "transform")
    return {"shift", "rotation", "scale", "reflection", "similarity", "affine", "pan-tilt-rotate", "euclidean"};
  if (axis == "alpha") return {0.1, 0.5, 1.0, 1.5, 2.0};
  if (axis == "loss-terms")
    return json::array({json::array({"mc"}), json::array({"sure"}), json::array({"rec"}),
                        json::array({"mc", "ec"}), json::array({"sure", "ec"}), json::array({"mc", "rec"}),
                        json::array({"sure", "rec"})});
  if (axis == "noise")
    return json::array({{{"kind", "gaussian"}, {"sigma", 10.0 / 255.0}},
                        {{"kind", "gaussian"}, {"sigma", 25.0 / 255.0}},
                        {{"kind", "gaussian"}, {"sigma", 50.0 / 255.0}}});
  if (axis == "dasa") return {true, false};
  throw ConfigError("unknown ablation axis '" + axis + "'");
}

std::string ablation_label(const std::string& axis, const json& value) {
  if (axis == "loss-terms") {
    std::string s;
    for (const auto& t : value) s += (s.empty() ? "" : "+") + t.get<std::string>();
    return s;
  }
  if (axis == "noise") {
    auto n = NoiseModel::from_json(value);
    std::ostringstream os;
    os << to_string(n.kind);
    if (n.has_gaussian()) os << "-sigma" << n.sigma * 255.0;
    if (n.has_poisson()) os << "-gain" << n.gain;
    return os.str();
  }
  if (axis == "dasa") return value.get<bool>() ? "on" : "off";
  if (value.is_string()) return value.get<std::string>();
  return value.dump();
}

ExperimentConfig apply_ablation_value(const ExperimentConfig& cfg, const std::string& axis, const json& value) {
  ExperimentConfig c = cfg;
  try {
    if (axis == "transform") {
      c.train.transform_kind = parse_transform_kind(value.get<std::string>());
    } else if (axis == "alpha") {
      c.train.loss.alpha = value.get<double>();
    } else if (axis == "loss-terms") {
      c.train.loss.terms.clear();
      for (const auto& t : value) c.train.loss.terms.push_back(parse_loss_term(t.get<std::string>()));
    } else if (axis == "noise") {
      c.noise = value.is_number() ? NoiseModel{NoiseKind::Gaussian, value.get<double>(), 1.0}
                                  : NoiseModel::from_json(value);
      c.train.loss.noise = c.noise;
    } else if (axis == "dasa") {
      c.train.net.use_dasa = value.get<bool>();
    } else {
      throw ConfigError("unknown ablation axis '" + axis + "'");
    }
    c.train.loss.validate();
  } catch (const json::exception& e) {
    throw ConfigError("ablation value " + value.dump() + ": " + e.what());
  } catch (const SpecError& e) {
    throw ConfigError(std::string("ablation value: ") + e.what());
  }
  return c;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const std::string& axis, const fs::path& out_dir) {
  const json values = cfg.ablation_values.is_null() || cfg.ablation_axis != axis ? default_ablation_values(axis)
                                                                                 : cfg.ablation_values;
  if (!values.is_array() || values.empty()) throw ConfigError("ablation values must be a non-empty array");
  fs::create_directories(out_dir);

  std::vector<AblationRow> rows;
  for (const auto& v : values) {
    AblationRow row{ablation_label(axis, v), "ok", std::nullopt};
    try {
      auto c = apply_ablation_value(cfg, axis, v);
      auto outcome = run_experiment(c, out_dir / (axis + "_" + row.label));
      row.metrics = outcome.report.best_metrics;
      if (!row.metrics) row.status = "no reference";
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    rows.push_back(row);
  }

  auto fmt = [](double v, int prec) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
  };
  std::ofstream csv(out_dir / ("ablation_" + axis + ".csv"));
  std::ofstream md(out_dir / ("ablation_" + axis + ".md"));
  if (!csv || !md) throw Error("cannot write ablation tables in " + out_dir.string());
  csv << axis << ",status,mpsnr,mssim,sam\n";
  md << "| " << axis << " | status | MPSNR | MSSIM | SAM |\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '|', '/');
    std::replace(status.begin(), status.end(), '\n', ' ');
    if (r.metrics) {
      csv << r.label << ',' << status << ',' << fmt(r.metrics->mpsnr, 4) << ',' << fmt(r.metrics->mssim, 4) << ','
          << fmt(r.metrics->sam, 4) << '\n';
      md << "| " << r.label << " | " << status << " | " << fmt(r.metrics->mpsnr, 2) << " | "
         << fmt(r.metrics->mssim, 3) << " | " << fmt(r.metrics->sam, 2) << " |\n";
    } else {
      csv << r.label << ',' << status << ",,,\n";
      md << "| " << r.label << " | " << status << " | - | - | - |\n";
    }
  }
  return rows;
}

// --- fixtures -----------------------------------------------------------------

std::vector<fs::path> make_fixtures(const fs::path& out_dir, const FixtureOptions& o) {
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  json manifest = {{"seed", o.seed}, {"bands", o.bands}, {"height", o.height}, {"width", o.width}};

  json cubes = json::array();
  for (auto rank : o.ranks) {
    RandomSource rng(o.seed, "fixture/cube-rank" + std::to_string(rank));
    auto cube = synthesize_lowrank_cube(o.bands, o.height, o.width, rank, rng);
    const std::string name = "cube_rank" + std::to_string(rank) + ".f32";
    save_cube(cube, out_dir / name, CubeFormat::RawF32Json);
    written.push_back(out_dir / name);
    written.push_back(sidecar_path(out_dir / name));
    cubes.push_back({{"file", name}, {"rank", rank}});
  }
  manifest["cubes"] = cubes;

  json masks = json::array();
  for (double ratio : kBenchmarkMaskRatios) {
    std::ostringstream tag;
    tag << std::fixed << std::setprecision(0) << ratio * 10000.0;
    RandomSource rng(o.seed, "fixture/mask-" + tag.str());
    auto mask = column_mask(o.bands, o.height, o.width, ratio, ColumnPattern::Random, rng);
    const std::string name = "mask_" + tag.str() + ".f32";
    save_cube(HsiCube(mask, {}, {}, "mask-" + tag.str()), out_dir / name, CubeFormat::RawF32Json);
    written.push_back(out_dir / name);
    written.push_back(sidecar_path(out_dir / name));
    const int64_t removed = std::llround(ratio * static_cast<double>(o.width));
    masks.push_back({{"file", name}, {"ratio", ratio}, {"removed_columns", removed}, {"pattern", "random"}});
  }
  manifest["masks"] = masks;

  const json kernels = {{"kernel_delta.json", kernel_to_json(delta_kernel())},
                        {"kernel_gaussian7.json", kernel_to_json(gaussian_kernel(7, 1.0))}};
  for (const auto& item : kernels.items()) {
    write_json(item.value(), out_dir / item.key());
    written.push_back(out_dir / item.key());
  }
  manifest["kernels"] = {"kernel_delta.json", "kernel_gaussian7.json"};

  const json common_train = {{"epochs", 600},
                             {"lr_init", 1e-3},
                             {"lr_final", 1e-4},
                             {"transform", "shift"},
                             {"seed", 0},
                             {"net", {{"channels", 16}, {"depth", 2}, {"stages", 2}, {"patch", 8}, {"rank", 4}, {"bank", 256}}},
                             {"loss", {{"terms", {"sure", "rec"}}, {"alpha", 1.0}, {"tau", 0.01}}}};
  const json preprocess = {{"normalize", {{"kind", "fixed-range"}, {"lo", 0.0}, {"hi", 1.0}}}};
  const json noise = {{"kind", "gaussian"}, {"sigma", 25.0 / 255.0}};

  json inpaint = {{"schema_version", kSchemaVersion},
                  {"task", "inpaint"},
                  {"input", {{"paths", {"cube_rank2.f32"}}}},
                  {"preprocess", preprocess},
                  {"mask", {{"pattern", "random"}, {"ratio", 0.25}}},
                  {"noise", noise},
                  {"data_seed", 0},
                  {"train", common_train},
                  {"output_dir", "share_out/toy_inpaint"}};
  json sr = {{"schema_version", kSchemaVersion},
             {"task", "sr"},
             {"input", {{"paths", {"cube_rank2.f32"}}}},
             {"preprocess", preprocess},
             {"sr", {{"kernel", {{"path", "kernel_gaussian7.json"}}}, {"factor", 2}, {"boundary", "reflect"}, {"pinv", "bicubic"}}},
             {"noise", noise},
             {"data_seed", 0},
             {"train", common_train},
             {"output_dir", "share_out/toy_sr"}};
  write_json(inpaint, out_dir / "toy_inpaint.json");
  write_json(sr, out_dir / "toy_sr.json");
  written.push_back(out_dir / "toy_inpaint.json");
  written.push_back(out_dir / "toy_sr.json");
  manifest["configs"] = {"toy_inpaint.json", "toy_sr.json"};

  write_json(manifest, out_dir / "manifest.json");
  written.push_back(out_dir / "manifest.json");
  return written;
}

}  // namespace share
