// penny-billiards: run the rolling-disk table experiments and write CSV/JSON
// outputs for plotting.
//
//   penny-billiards simulate (--preset NAME | --config FILE) [--mode elastic|plastic] [--impacts N] [--out DIR]
//   penny-billiards ensemble (--config FILE | --preset ensemble) [--out DIR] [--threads N]
//   penny-billiards validate --config FILE
//   penny-billiards presets [--dump NAME]
//
// Exit codes: 0 success, 2 configuration error, 3 engine error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "nhimpact/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitEngine = 3;

using nhimpact::scenario::ScenarioConfig;

ScenarioConfig resolve_config(const std::string& preset, const std::string& config_path) {
  if (!preset.empty() && !config_path.empty()) {
    throw nhimpact::ConfigError("pass either --preset or --config, not both");
  }
  if (!preset.empty()) return nhimpact::scenario::preset(preset);
  if (!config_path.empty()) return nhimpact::scenario::load_config(config_path);
  throw nhimpact::ConfigError("one of --preset or --config is required");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rolling disk on an elliptical table with nonholonomic impacts"};
  app.require_subcommand(1);

  std::string preset;
  std::string config_path;
  std::string mode;
  std::optional<int> impacts;
  std::string out_dir;
  unsigned threads = 0;
  std::string dump;

  auto* sim = app.add_subcommand("simulate", "Run one scenario and write trajectory.csv, events.csv, summary.json");
  sim->add_option("--preset", preset, "Preset scenario name");
  sim->add_option("--config", config_path, "Scenario config file (JSON)");
  sim->add_option("--mode", mode, "Override impact mode")->check(CLI::IsMember({"elastic", "plastic"}));
  sim->add_option("--impacts", impacts, "Override max_impacts");
  sim->add_option("--out", out_dir, "Output directory (default: config output_dir)");

  auto* ens = app.add_subcommand("ensemble", "Run the perturbed-rate ensemble and write snapshot CSVs");
  ens->add_option("--preset", preset, "Preset scenario name (must have an ensemble section)");
  ens->add_option("--config", config_path, "Scenario config file (JSON)");
  ens->add_option("--out", out_dir, "Output directory (default: config output_dir)");
  ens->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

  auto* val = app.add_subcommand("validate", "Check a config file and exit");
  val->add_option("--config", config_path, "Scenario config file (JSON)")->required();

  auto* pre = app.add_subcommand("presets", "List preset names, or print one as a config file");
  pre->add_option("--dump", dump, "Preset to print as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (pre->parsed()) {
      if (!dump.empty()) {
        std::cout << nhimpact::scenario::to_json(nhimpact::scenario::preset(dump)).dump(2) << '\n';
      } else {
        for (const auto& name : nhimpact::scenario::preset_names()) std::cout << name << '\n';
      }
      return kExitOk;
    }

    ScenarioConfig config = resolve_config(preset, config_path);
    if (!mode.empty()) config.engine.mode = *nhimpact::engine::parse_mode(mode);
    if (impacts) config.engine.max_impacts = *impacts;
    config.validate();
    if (config.table.cramped_for(config.params)) {
      std::cerr << "warning: table semi-axes are less than 5 disk radii\n";
    }

    if (val->parsed()) {
      std::cout << "config OK\n";
      return kExitOk;
    }

    const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(config.output_dir) : std::filesystem::path(out_dir);
    if (sim->parsed()) {
      const auto trace = nhimpact::scenario::run_scenario(config, dir);
      std::cout << "termination=" << nhimpact::engine::to_string(trace.termination)
                << " impacts=" << trace.impact_count()
                << " grazing=" << trace.events.size() - static_cast<std::size_t>(trace.impact_count()) << " t_final=" << trace.t_final << " out=" << dir.string()
                << '\n';
      if (trace.termination == nhimpact::engine::Termination::Error) {
        std::cerr << "engine error: " << trace.error_message << '\n';
        return kExitEngine;
      }
      return kExitOk;
    }

    const auto result = nhimpact::scenario::run_ensemble(config, dir, threads);
    std::cout << "members=" << result.members.size() << " failed=" << result.failed_members.size()
              << " snapshots=" << result.snapshot_files.size() << " out=" << dir.string() << '\n';
    return kExitOk;
  } catch (const nhimpact::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nhimpact::Error& e) {
    std::cerr << "engine error: " << e.what() << '\n';
    return kExitEngine;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitEngine;
  }
}
