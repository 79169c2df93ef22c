#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nhimpact/scenario.hpp"
#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
using namespace nhimpact;
using namespace nhimpact::scenario;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nhimpact_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

TEST(Presets, TableValues) {
  const auto ec = preset("elastic-circle");
  EXPECT_EQ(ec.table.a, 0.20);
  EXPECT_EQ(ec.table.b, 0.20);
  const auto pe = preset("plastic-ellipse");
  EXPECT_EQ(pe.table.a, 0.15);
  EXPECT_EQ(pe.table.b, 0.20);
  EXPECT_EQ(pe.engine.mode, engine::ImpactMode::Plastic);
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    EXPECT_EQ(c.initial.thetadot, 10.0);
    EXPECT_EQ(c.initial.phidot, 0.2);
    EXPECT_EQ(c.params.R, 0.01);
    EXPECT_EQ(c.params.m, 0.0025);
    EXPECT_EQ(c.params.I, 1.25e-7);
    EXPECT_EQ(c.params.J, 6.25e-8);
    EXPECT_NO_THROW(c.validate());
  }
  EXPECT_THROW(preset("nope"), ConfigError);
}

TEST(Config, RoundTripsExactly) {
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    const auto dir = scratch("cfg_" + name);
    save_config(c, dir / "c.json");
    const auto back = load_config(dir / "c.json");
    EXPECT_EQ(to_json(back), to_json(c));
    save_config(back, dir / "d.json");
    EXPECT_EQ(slurp(dir / "c.json"), slurp(dir / "d.json"));
  }
}

TEST(Config, RejectsUnknownAndMissingKeys) {
  auto j = to_json(preset("elastic-circle"));
  j["engine"]["bogus"] = 1;
  EXPECT_THROW(from_json(j), ConfigError);
  j = to_json(preset("elastic-circle"));
  j["extra"] = true;
  EXPECT_THROW(from_json(j), ConfigError);
  j = to_json(preset("elastic-circle"));
  j["penny"].erase("J");
  EXPECT_THROW(from_json(j), ConfigError);
  j = to_json(preset("elastic-circle"));
  j["schema_version"] = 2;
  EXPECT_THROW(from_json(j), ConfigError);
  j = to_json(preset("elastic-circle"));
  j["engine"]["mode"] = "sticky";
  EXPECT_THROW(from_json(j), ConfigError);
  j = to_json(preset("elastic-circle"));
  j["table"]["a"] = "wide";
  EXPECT_THROW(from_json(j), ConfigError);
}

TEST(Config, ValidationErrors) {
  auto c = preset("elastic-circle");
  c.table.a = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset("ensemble");
  c.ensemble->count = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunScenario, ElasticCircleOutputs) {
  const auto dir = scratch("elastic_circle");
  const auto c = preset("elastic-circle");
  const auto trace = run_scenario(c, dir);
  EXPECT_EQ(trace.events.size(), 20u);

  const auto traj = read_csv(dir / "trajectory.csv");
  ASSERT_GT(traj.size(), 2u);
  EXPECT_EQ(slurp(dir / "trajectory.csv").substr(0, std::string(kTrajectoryHeader).size()), kTrajectoryHeader);
  const double e0 = std::stod(traj[1][9]);
  for (std::size_t i = 1; i < traj.size(); ++i) {
    ASSERT_EQ(traj[i].size(), 12u);
    EXPECT_LT(nhtest::rel_err(std::stod(traj[i][9]), e0), 1e-9);
  }

  const auto events = read_csv(dir / "events.csv");
  ASSERT_EQ(events.size(), 21u);
  EXPECT_EQ(slurp(dir / "events.csv").substr(0, std::string(kEventsHeader).size()), kEventsHeader);
  for (std::size_t i = 1; i < events.size(); ++i) {
    EXPECT_EQ(events[i][3], "elastic");
    // Round-trip through text is lossless at 17 significant digits.
    const double tau = std::stod(events[i][1]);
    EXPECT_EQ(tau, trace.events[i - 1].time);
    EXPECT_EQ(std::stod(events[i][8]), trace.events[i - 1].energy_after);
  }

  const auto summary = json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(summary["termination"], "max_impacts");
  EXPECT_EQ(summary["impact_count"], 20);
  EXPECT_LT(std::abs(summary["energy_drift_rel"].get<double>()), 1e-9);
  EXPECT_EQ(from_json(summary["config_echo"]).engine.max_impacts, 20);
}

TEST(RunScenario, PlasticEllipseDissipates) {
  const auto dir = scratch("plastic_ellipse");
  run_scenario(preset("plastic-ellipse"), dir);
  const auto events = read_csv(dir / "events.csv");
  ASSERT_GT(events.size(), 1u);
  EXPECT_EQ(std::count_if(events.begin() + 1, events.end(), [](const auto& row) { return row[9] == "0"; }), 20);
  double prev = 1.0;
  for (std::size_t i = 1; i < events.size(); ++i) {
    const double e = std::stod(events[i][8]);
    EXPECT_LE(e, prev * (1.0 + 1e-12));  // flow conserves energy to roundoff
    EXPECT_LE(e, std::stod(events[i][7]));
    prev = e;
  }
}

TEST(RunScenario, ZeroVelocityRunsToTimeLimit) {
  auto c = preset("elastic-circle");
  c.initial.thetadot = 0.0;
  c.initial.phidot = 0.0;
  c.engine.t_max = 5.0;
  const auto dir = scratch("idle");
  const auto trace = run_scenario(c, dir);
  EXPECT_TRUE(trace.events.empty());
  const auto summary = json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(summary["termination"], "t_max");
  EXPECT_EQ(summary["impact_count"], 0);
  EXPECT_EQ(read_csv(dir / "events.csv").size(), 1u);
}

TEST(RunScenario, ByteIdenticalReruns) {
  const auto a = scratch("rerun_a");
  const auto b = scratch("rerun_b");
  auto c = preset("plastic-circle");
  run_scenario(c, a);
  run_scenario(c, b);
  for (const char* f : {"trajectory.csv", "events.csv", "summary.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

EnsembleConfig small_ensemble(double bound) {
  EnsembleConfig e;
  e.count = 12;
  e.perturb_bound = bound;
  e.rng_seed = 99;
  e.snapshot_times = {0.0, 2.5, 6.0};
  return e;
}

TEST(Ensemble, ZeroPerturbationGivesIdenticalRows) {
  auto c = preset("ensemble");
  c.ensemble = small_ensemble(0.0);
  const auto dir = scratch("ens_zero");
  const auto result = run_ensemble(c, dir, 3);
  EXPECT_TRUE(result.failed_members.empty());
  ASSERT_EQ(result.snapshot_files.size(), 3u);
  for (const auto& f : result.snapshot_files) {
    const auto rows = read_csv(f);
    ASSERT_EQ(rows.size(), 13u);
    for (std::size_t i = 2; i < rows.size(); ++i) {
      EXPECT_EQ(std::vector<std::string>(rows[i].begin() + 1, rows[i].end()),
                std::vector<std::string>(rows[1].begin() + 1, rows[1].end()));
    }
  }
  EXPECT_EQ(result.snapshot_files[1].filename(), "snapshot_t2.5.csv");
}

TEST(Ensemble, DeterministicAcrossThreadCounts) {
  auto c = preset("ensemble");
  c.ensemble = small_ensemble(0.005);
  const auto a = scratch("ens_a");
  const auto b = scratch("ens_b");
  run_ensemble(c, a, 1);
  run_ensemble(c, b, 4);
  for (const auto& entry : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
  }
}

TEST(Ensemble, PerturbationsWithinBound) {
  auto c = preset("ensemble");
  c.ensemble = small_ensemble(0.005);
  for (int i = 0; i < 200; ++i) {
    const auto [td, pd] = member_rates(c, i);
    EXPECT_LE(std::abs(td - 10.0), 0.005);
    EXPECT_LE(std::abs(pd - 0.2), 0.005);
  }
  EXPECT_NE(member_rates(c, 0), member_rates(c, 1));
}

TEST(Ensemble, FailedMembersAreFlagged) {
  // Too few impacts to reach the last snapshot: those rows are flagged, the run continues.
  auto c = preset("ensemble");
  c.ensemble = small_ensemble(0.005);
  c.engine.max_impacts = 1;
  const auto dir = scratch("ens_fail");
  const auto result = run_ensemble(c, dir, 2);
  EXPECT_EQ(result.failed_members.size(), 12u);
  const auto first = read_csv(dir / "snapshot_t0.csv");
  EXPECT_EQ(first[1].back(), "ok");
  const auto last = read_csv(dir / "snapshot_t6.csv");
  EXPECT_EQ(last[1].back(), "failed");
}

TEST(Ensemble, RequiresEnsembleSection) {
  EXPECT_THROW(run_ensemble(preset("elastic-circle"), scratch("ens_none")), ConfigError);
}

// The CLI binary path is injected by CMake.
#ifdef NHIMPACT_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(NHIMPACT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

TEST(Cli, SimulatePresetAndExitCodes) {
  const auto dir = scratch("cli_sim");
  EXPECT_EQ(run_cli("simulate --preset elastic-circle --impacts 3 --out " + dir.string()), 0);
  EXPECT_EQ(read_csv(dir / "events.csv").size(), 4u);
  EXPECT_EQ(run_cli("simulate --preset elastic-circle --mode plastic --impacts 2 --out " + dir.string()), 0);
  EXPECT_EQ(read_csv(dir / "events.csv")[1][3], "plastic");
  EXPECT_EQ(run_cli("simulate --preset not-a-preset"), 2);
  EXPECT_EQ(run_cli("simulate"), 2);
  EXPECT_EQ(run_cli("simulate --preset elastic-circle --impacts 0 --out " + dir.string()), 2);
  EXPECT_EQ(run_cli("presets"), 0);
}

TEST(Cli, ConfigFileValidateAndEnsemble) {
  const auto dir = scratch("cli_cfg");
  auto c = preset("ensemble");
  c.ensemble = small_ensemble(0.005);
  save_config(c, dir / "ens.json");
  EXPECT_EQ(run_cli("validate --config " + (dir / "ens.json").string()), 0);
  EXPECT_EQ(run_cli("ensemble --config " + (dir / "ens.json").string() + " --out " + (dir / "out").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "snapshot_t6.csv"));

  std::ofstream(dir / "bad.json") << R"({"schema_version": 1, "unknown": 3})";
  EXPECT_EQ(run_cli("validate --config " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("validate --config " + (dir / "missing.json").string()), 2);
}

TEST(Cli, EngineErrorExitsWithThree) {
  // A root tolerance below double resolution makes event location fail.
  const auto dir = scratch("cli_engine");
  auto c = preset("elastic-circle");
  c.engine.root_tol = 1e-30;
  save_config(c, dir / "c.json");
  EXPECT_EQ(run_cli("simulate --config " + (dir / "c.json").string() + " --out " + (dir / "out").string()), 3);
  // Partial outputs are flushed.
  const auto summary = json::parse(slurp(dir / "out" / "summary.json"));
  EXPECT_EQ(summary["termination"], "error");
}
#endif

}  // namespace
