#include <cstdlib>
#include <fstream>
#include <sstream>

#include "share/experiment.hpp"
#include "share/io.hpp"
#include "support.hpp"

// torch logging headers define their own CHECK.
#undef CHECK
#include <doctest.h>

using namespace share;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

FixtureOptions small_fixtures() {
  FixtureOptions o;
  o.bands = 4;
  o.height = 16;
  o.width = 16;
  return o;
}

// A fast experiment document over the small fixtures in dir.
json fast_config(const fs::path& dir, const std::string& file = "toy_inpaint.json") {
  auto j = json::parse(slurp(dir / file));
  j["train"]["epochs"] = 3;
  j["train"]["net"] = {{"channels", 8}, {"depth", 2}, {"stages", 2}, {"patch", 4}, {"rank", 3}, {"bank", 16}};
  return j;
}

int run_cli(const std::string& args, const fs::path& capture) {
  std::string cmd = std::string(SHARE_BIN) + " " + args + " > " + capture.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("fixtures are deterministic") {
  testing::TempDir a("fix_a"), b("fix_b");
  auto fa = make_fixtures(a.path, small_fixtures());
  auto fb = make_fixtures(b.path, small_fixtures());
  REQUIRE(fa.size() == fb.size());
  for (size_t i = 0; i < fa.size(); ++i) {
    CAPTURE(fa[i].string());
    CHECK(fa[i].filename() == fb[i].filename());
    CHECK(slurp(fa[i]) == slurp(fb[i]));
  }
  auto manifest = json::parse(slurp(a.path / "manifest.json"));
  CHECK(manifest.at("cubes").size() == 3);
  for (const auto& m : manifest.at("masks")) {
    auto mask = load_cube(a.path / m.at("file").get<std::string>()).data();
    // Whole columns through every band.
    auto cols = mask.amin({0, 1});
    CHECK(torch::equal(cols, mask.amax({0, 1})));
    double removed = (1 - cols).sum().item<double>();
    CHECK(std::abs(removed - m.at("ratio").get<double>() * 16) <= 1.0);
  }
  for (const auto& c : manifest.at("cubes")) {
    auto cube = load_cube(a.path / c.at("file").get<std::string>()).data().reshape({4, -1});
    auto sv = torch::linalg_svdvals(cube.to(torch::kFloat64));
    int64_t rank = (sv > 1e-5 * sv[0]).sum().item<int64_t>();
    CHECK(rank == c.at("rank").get<int64_t>());
  }
}

TEST_CASE("config parsing") {
  testing::TempDir tmp("cfg");
  make_fixtures(tmp.path, small_fixtures());
  auto j = fast_config(tmp.path);
  auto cfg = ExperimentConfig::from_json(j, tmp.path);
  CHECK(cfg.task == Task::Inpaint);
  CHECK(cfg.input.paths.at(0) == tmp.path / "cube_rank2.f32");
  CHECK(cfg.train.loss.noise.sigma == doctest::Approx(25.0 / 255.0));
  CHECK(cfg.train.epochs == 3);

  // The resolved document parses back to itself.
  auto again = ExperimentConfig::from_json(cfg.to_json());
  CHECK(again.to_json() == cfg.to_json());

  auto sr = ExperimentConfig::from_json(fast_config(tmp.path, "toy_sr.json"), tmp.path);
  CHECK(sr.task == Task::SuperResolution);
  CHECK(kernel_from_json(sr.sr.kernel).size(0) == 7);

  auto broken = [&](auto mutate) {
    json k = j;
    mutate(k);
    return k;
  };
  CHECK_THROWS_AS(ExperimentConfig::from_json(broken([](json& k) { k["colour"] = 1; }), tmp.path), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(broken([](json& k) { k["schema_version"] = 7; }), tmp.path),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(broken([](json& k) { k["task"] = "deblur"; }), tmp.path), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(broken([](json& k) { k["train"]["loss"]["terms"] = {"mc", "sure"}; }),
                                              tmp.path),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(broken([](json& k) { k["train"]["loss"]["noise"] = json::object(); }),
                                              tmp.path),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(broken([](json& k) { k["mask"]["pattern"] = "zigzag"; }), tmp.path),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load(tmp.path / "absent.json"), ConfigError);

  auto missing = ExperimentConfig::from_json(broken([](json& k) { k["input"]["paths"] = {"nope.f32"}; }), tmp.path);
  try {
    prepare_problem(missing);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("input not found") != std::string::npos);
  }
}

TEST_CASE("problem preparation") {
  testing::TempDir tmp("problem");
  make_fixtures(tmp.path, small_fixtures());
  auto cfg = ExperimentConfig::from_json(fast_config(tmp.path), tmp.path);
  auto p = prepare_problem(cfg);
  REQUIRE(p.measurements.size() == 1);
  REQUIRE(p.references.has_value());
  auto x = (*p.references)[0];
  // y = H x + n: the residual has the configured noise level everywhere,
  // and the observed pixels carry the signal.
  auto& op = dynamic_cast<const InpaintOperator&>(*p.op);
  auto r = p.measurements[0] - op.apply(x);
  CHECK(r.std().item<double>() == doctest::Approx(25.0 / 255.0).epsilon(0.1));
  CHECK(std::abs(r.mean().item<double>()) < 0.01);
  auto q = prepare_problem(cfg);
  CHECK(testing::bit_equal(p.measurements[0], q.measurements[0]));

  auto sr = ExperimentConfig::from_json(fast_config(tmp.path, "toy_sr.json"), tmp.path);
  auto ps = prepare_problem(sr);
  CHECK(ps.measurements[0].sizes() == std::vector<int64_t>{4, 8, 8});
}

TEST_CASE("run artifacts and reproducibility") {
  testing::TempDir tmp("run");
  make_fixtures(tmp.path, small_fixtures());
  auto cfg = ExperimentConfig::from_json(fast_config(tmp.path), tmp.path);
  auto a = run_experiment(cfg, tmp.path / "a");
  for (auto name : {"config.json", "loss.jsonl", "xhat.f32", "xhat.json", "model.ckpt", "report.json",
                    "band_images.json", "band_000.png", "error_000.png"}) {
    CAPTURE(name);
    CHECK(fs::exists(tmp.path / "a" / name));
  }
  CHECK(slurp(tmp.path / "a" / "band_000.png").substr(1, 3) == "PNG");
  auto xhat = load_cube(tmp.path / "a" / "xhat.f32");
  CHECK(xhat.data().sizes() == std::vector<int64_t>{4, 16, 16});

  auto b = run_experiment(cfg, tmp.path / "b");
  auto metrics = [&](const char* d) { return json::parse(slurp(tmp.path / d / "report.json")).at("metrics").dump(); };
  CHECK(metrics("a") == metrics("b"));
  CHECK(slurp(tmp.path / "a" / "xhat.f32") == slurp(tmp.path / "b" / "xhat.f32"));

  // The saved config alone reproduces the run.
  auto saved = ExperimentConfig::load(tmp.path / "a" / "config.json");
  run_experiment(saved, tmp.path / "c");
  CHECK(metrics("a") == metrics("c"));

  auto ckpt = load_checkpoint(tmp.path / "a" / "model.ckpt");
  CHECK(ckpt->config().bands == 4);
}

TEST_CASE("ablation rows") {
  testing::TempDir tmp("ablate");
  make_fixtures(tmp.path, small_fixtures());
  auto j = fast_config(tmp.path);
  j["train"]["epochs"] = 1;
  auto cfg = ExperimentConfig::from_json(j, tmp.path);
  CHECK(default_ablation_values("loss-terms").size() == 7);
  CHECK(default_ablation_values("transform").size() == 8);
  CHECK_THROWS_AS(default_ablation_values("colour"), ConfigError);
  CHECK(ablation_label("loss-terms", {"sure", "rec"}) == "sure+rec");
  CHECK(ablation_label("dasa", false) == "off");

  cfg.ablation_axis = "alpha";
  cfg.ablation_values = {0.0, 2.0};
  auto rows = run_ablation(cfg, "alpha", tmp.path / "out");
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.status == "ok");
    CHECK(r.metrics.has_value());
  }
  auto csv = slurp(tmp.path / "out" / "ablation_alpha.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(fs::exists(tmp.path / "out" / "ablation_alpha.md"));

  // A failing value becomes a status row instead of aborting the sweep.
  cfg.ablation_axis = "loss-terms";
  cfg.ablation_values = json::array({json::array({"mc"}), json::array({"mc", "sure"})});
  auto mixed = run_ablation(cfg, "loss-terms", tmp.path / "out");
  REQUIRE(mixed.size() == 2);
  CHECK(mixed[0].status == "ok");
  CHECK(mixed[1].status.rfind("failed", 0) == 0);
}

TEST_CASE("command line exit codes") {
  testing::TempDir tmp("cli");
  auto log = tmp.path / "log.txt";
  CHECK(run_cli("run --config " + (tmp.path / "missing.json").string(), log) == 2);
  CHECK(slurp(log).find("input not found") != std::string::npos);
  CHECK(run_cli("frobnicate", log) == 2);
  CHECK(run_cli("ablate --config x.json --axis", log) == 2);

  CHECK(run_cli("fixtures --out " + (tmp.path / "fx").string(), log) == 0);
  auto j = fast_config(tmp.path / "fx");
  j["train"]["epochs"] = 1;
  j["input"]["paths"] = {(tmp.path / "fx" / "cube_rank1.f32").string()};
  {
    std::ofstream(tmp.path / "exp.json") << j.dump();
  }
  CHECK(run_cli("run --config " + (tmp.path / "exp.json").string() + " --out " + (tmp.path / "r").string(), log) == 0);
  CHECK(fs::exists(tmp.path / "r" / "report.json"));
  CHECK(run_cli("eval --estimate " + (tmp.path / "r" / "xhat.f32").string() + " --reference " +
                    (tmp.path / "fx" / "cube_rank1.f32").string(),
                log) == 0);
  CHECK(json::parse(slurp(log)).contains("mpsnr"));
  CHECK(run_cli("run --config " + (tmp.path / "exp.json").string() + " --device cuda --out " +
                    (tmp.path / "r2").string(),
                log) == 2);

  j["input"]["paths"] = {(tmp.path / "fx" / "gone.f32").string()};
  {
    std::ofstream(tmp.path / "bad.json") << j.dump();
  }
  CHECK(run_cli("run --config " + (tmp.path / "bad.json").string() + " --out " + (tmp.path / "r3").string(), log) == 2);
  CHECK(slurp(log).find("input not found") != std::string::npos);
}
