#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "isde/experiment.hpp"

using namespace isde;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "isde_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

ExperimentConfig config(ExperimentKind kind, const fs::path& out, std::vector<std::string> overrides,
                        const std::string& seeds = "2") {
  return resolve_config(kind, std::nullopt, overrides, seeds, out);
}

struct Shell {
  int status;
  std::string output;
};

Shell run_cli(const std::string& args) {
  const auto log = fs::temp_directory_path() / "isde_test_experiment" / "cli.log";
  fs::create_directories(log.parent_path());
  const std::string cmd = std::string(ISDE_LAB_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(log)};
}

}  // namespace

TEST_CASE("seed syntax") {
  CHECK(parse_seeds("3") == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(parse_seeds("5,") == std::vector<std::uint64_t>{5});
  CHECK(parse_seeds(" 1, 4 ") == std::vector<std::uint64_t>{1, 4});
  CHECK_THROWS_AS(parse_seeds("0"), ConfigError);
  CHECK_THROWS_AS(parse_seeds("x"), ConfigError);
  CHECK_THROWS_AS(parse_seeds(","), ConfigError);
}

TEST_CASE("config resolution order") {
  const auto dir = scratch("resolve");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "run.ini");
    f << "[model]\nfield = dyson\nn = 50\n\n[integrator]\ndt = 0.01\n\n[run]\nseeds = 7,8\n";
  }
  const auto cfg = resolve_config(ExperimentKind::Simulate, dir / "run.ini", {"model.n=60", "drift.confinement=0.25"},
                                  std::nullopt, dir / "out");
  CHECK(cfg.field == "dyson");
  CHECK(cfg.n == 60);
  CHECK(cfg.dt == 0.01);
  CHECK(cfg.confinement == 0.25);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{7, 8});
  CHECK(resolve_config(ExperimentKind::Sample, dir / "run.ini", {}, "3", dir).seeds.size() == 3);

  CHECK_THROWS_AS(resolve_config(ExperimentKind::Sample, std::nullopt, {"model.colour=red"}, std::nullopt, dir),
                  ConfigError);
  CHECK_THROWS_AS(resolve_config(ExperimentKind::Sample, std::nullopt, {"model.n=ten"}, std::nullopt, dir), ConfigError);
  CHECK_THROWS_AS(resolve_config(ExperimentKind::Sample, std::nullopt, {"model.n"}, std::nullopt, dir), ConfigError);
  CHECK_THROWS_AS(resolve_config(ExperimentKind::Sample, dir / "missing.ini", {}, std::nullopt, dir), ConfigError);

  SUBCASE("resolved config is itself a valid config file") {
    std::ofstream(dir / "resolved.ini") << cfg.to_ini();
    const auto again = resolve_config(ExperimentKind::Simulate, dir / "resolved.ini", {}, std::nullopt, dir / "out");
    CHECK(again.to_ini() == cfg.to_ini());
  }
}

TEST_CASE("validation") {
  const auto dir = scratch("validate");
  auto cfg = config(ExperimentKind::Sample, dir, {"model.beta=3"});
  try {
    cfg.validate();
    FAIL("beta = 3 accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("{1, 2, 4}") != std::string::npos);
  }
  std::ostringstream log;
  CHECK(run_experiment(cfg, log) == kExitInvalidConfig);
  CHECK(log.str().find("{1, 2, 4}") != std::string::npos);
  CHECK(manifest(dir).at("status") == "invalid-config");

  CHECK_THROWS_AS(config(ExperimentKind::Invariance, dir, {}, "1").validate(), ConfigError);
  CHECK_THROWS_AS(config(ExperimentKind::Spacing, dir, {"model.field=ginibre"}).validate(), ConfigError);
  CHECK_THROWS_AS(config(ExperimentKind::Spacing, dir, {"model.field=dyson", "estimator.small_gap=0.15"}).validate(),
                  ConfigError);
  CHECK_THROWS_AS(config(ExperimentKind::PluralDiagnostic, dir, {"diagnostic.radii=5,3"}).validate(), ConfigError);
  CHECK_THROWS_AS(config(ExperimentKind::Simulate, dir, {"drift.representation=sideways"}).validate(), ConfigError);
  CHECK_THROWS_AS(config(ExperimentKind::Simulate, dir, {"integrator.dt=-1"}).validate(), ConfigError);
  CHECK_THROWS_AS(config(ExperimentKind::Invariance, dir, {"model.n=36"}).validate(), ConfigError);
  CHECK_NOTHROW(config(ExperimentKind::Invariance, dir, {"model.n=400"}).validate());
}

TEST_CASE("sample run writes checksummed artifacts") {
  const auto dir = scratch("sample");
  std::ostringstream log;
  REQUIRE(run_experiment(config(ExperimentKind::Sample, dir, {"model.n=40"}, "3"), log) == kExitOk);
  const auto m = manifest(dir);
  CHECK(m.at("status") == "ok");
  CHECK(m.at("experiment") == "sample");
  CHECK(m.at("files").size() == 4);
  for (const auto& f : m.at("files")) {
    CHECK(sha256_file(dir / f.at("path").get<std::string>()) == f.at("sha256").get<std::string>());
  }
  CHECK(fs::exists(dir / "config_seed2.csv"));
  CHECK(slurp(dir / "config_seed0.csv").rfind("dim,n\n2,40\n", 0) == 0);

  std::ostringstream summary;
  CHECK(summarize(dir, summary) == kExitOk);
  CHECK(summary.str().find("integrity: 4 file(s) verified") != std::string::npos);

  SUBCASE("rerun is byte-identical") {
    const auto dir2 = scratch("sample_rerun");
    REQUIRE(run_experiment(config(ExperimentKind::Sample, dir2, {"model.n=40", "run.threads=2"}, "3"), log) == kExitOk);
    for (const auto& f : m.at("files")) {
      const auto name = f.at("path").get<std::string>();
      if (name == "resolved_config.ini") continue;
      CHECK(slurp(dir / name) == slurp(dir2 / name));
    }
  }
  SUBCASE("tampering is detected") {
    std::ofstream(dir / "config_seed1.csv", std::ios::app) << "0,0\n";
    std::ostringstream out;
    CHECK(summarize(dir, out) == kExitComputeFailure);
    CHECK(out.str().find("INTEGRITY FAIL config_seed1.csv") != std::string::npos);
  }
  SUBCASE("missing files are detected") {
    fs::remove(dir / "config_seed0.csv");
    std::ostringstream out;
    CHECK(summarize(dir, out) == kExitComputeFailure);
    CHECK(out.str().find("file missing") != std::string::npos);
  }
}

TEST_CASE("summarize without a manifest") {
  const auto dir = scratch("empty");
  fs::create_directories(dir);
  std::ostringstream out;
  CHECK(summarize(dir, out) == kExitComputeFailure);
  CHECK(out.str().find("manifest error") != std::string::npos);
  std::ofstream(dir / "manifest.json") << "{not json";
  std::ostringstream out2;
  CHECK(summarize(dir, out2) == kExitComputeFailure);
  CHECK(out2.str().find("corrupt") != std::string::npos);
}

TEST_CASE("simulate, plural-diagnostic and spacing runs") {
  std::ostringstream log;
  SUBCASE("simulate") {
    const auto dir = scratch("simulate");
    const auto cfg = config(ExperimentKind::Simulate, dir,
                            {"model.n=30", "integrator.t_end=0.01", "integrator.dt=0.001", "integrator.snapshot_every=0.005"});
    REQUIRE(run_experiment(cfg, log) == kExitOk);
    const auto m = manifest(dir);
    CHECK(m.at("checks").at(0).at("name") == "no_collision_errors");
    CHECK(m.at("checks").at(0).at("pass").get<bool>());
    CHECK(fs::exists(dir / "trajectory_seed1.jsonl"));
    CHECK(fs::exists(dir / "final_seed0.csv"));
    const auto dir2 = scratch("simulate_rerun");
    auto cfg2 = cfg;
    cfg2.out = dir2;
    REQUIRE(run_experiment(cfg2, log) == kExitOk);
    CHECK(slurp(dir / "trajectory_seed1.jsonl") == slurp(dir2 / "trajectory_seed1.jsonl"));
  }
  SUBCASE("dyson simulate") {
    const auto dir = scratch("simulate_dyson");
    REQUIRE(run_experiment(config(ExperimentKind::Simulate, dir,
                                  {"model.field=dyson", "model.n=40", "integrator.t_end=0.01", "integrator.dt=0.0005"}),
                           log) == kExitOk);
    CHECK(slurp(dir / "final_seed0.csv").rfind("dim,n\n1,40\n", 0) == 0);
  }
  SUBCASE("plural diagnostic") {
    const auto dir = scratch("plural");
    REQUIRE(run_experiment(config(ExperimentKind::PluralDiagnostic, dir, {"model.n=300", "diagnostic.radii=1,2,4"}), log) ==
            kExitOk);
    CHECK(slurp(dir / "gap_curve.csv").rfind("r,gap_mean,gap_std,n_seeds\n1,", 0) == 0);
    CHECK(manifest(dir).at("checks").at(0).at("name") == "gap_mean_decreasing_to_r20");
  }
  SUBCASE("spacing") {
    const auto dir = scratch("spacing");
    REQUIRE(run_experiment(config(ExperimentKind::Spacing, dir, {"model.field=dyson", "model.n=300"}, "20"), log) == kExitOk);
    const auto m = manifest(dir);
    CHECK(m.at("checks").at(0).at("name") == "small_gap_suppression");
    CHECK(m.at("checks").at(0).at("pass").get<bool>());
    CHECK(slurp(dir / "spacing.csv").rfind("s_lo,s_hi,density,count,stderr\n", 0) == 0);
  }
  SUBCASE("invariance") {
    const auto dir = scratch("invariance");
    REQUIRE(run_experiment(config(ExperimentKind::Invariance, dir,
                                  {"model.n=120", "integrator.t_end=0.02", "integrator.dt=0.001",
                                   "integrator.snapshot_every=0.002", "run.save_trajectories=true"},
                                  "3"),
                           log) != kExitInvalidConfig);
    CHECK(fs::exists(dir / "report.txt"));
    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(report.at("seeds") == 3);
    CHECK(fs::exists(dir / "trajectory_seed2.jsonl"));
  }
}

TEST_CASE("command line") {
  const auto dir = scratch("cli");
  auto r = run_cli("sample --set model.beta=3 --out " + dir.string());
  CHECK(r.status == 2);
  CHECK(r.output.find("{1, 2, 4}") != std::string::npos);

  r = run_cli("sample --set model.n=20 --seeds 2 --out " + dir.string());
  CHECK(r.status == 0);
  r = run_cli("summarize " + dir.string());
  CHECK(r.status == 0);
  CHECK(r.output.find("status: ok") != std::string::npos);

  r = run_cli("summarize " + (dir / "nowhere").string());
  CHECK(r.status == 1);
  CHECK(r.output.find("manifest error") != std::string::npos);

  r = run_cli("sample --bogus");
  CHECK(r.status == 2);
  r = run_cli("sample --set nokey --out " + dir.string());
  CHECK(r.status == 2);
  r = run_cli("");
  CHECK(r.status == 2);
}
