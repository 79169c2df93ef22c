#pragma once

// Scenario configuration, the table-billiard presets, and the CSV/JSON
// outputs consumed by the plotting scripts.
//
// Output contract (headers are exact):
//   trajectory.csv      t,x,y,theta,phi,xdot,ydot,thetadot,phidot,energy,h_front,h_back
//   events.csv          i,tau,side,mode,alpha,lambda1,lambda2,e_pre,e_post,grazing
//   summary.json        termination, impact_count, grazing_count, energy_drift_rel, config_echo (+ t_final, error)
//   snapshot_t<T>.csv   member,x,y,theta,phi,xdot,ydot,thetadot,phidot,status
// Floats are written with 17 significant digits.

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nhimpact/engine.hpp"
#include "nhimpact/errors.hpp"
#include "nhimpact/penny.hpp"

namespace nhimpact::scenario {

using nlohmann::json;
using engine::EngineOptions;
using engine::ExecutionTrace;
using penny::PennyParams;
using penny::PennyState;
using penny::TableParams;

inline constexpr int kSchemaVersion = 1;

inline constexpr const char* kTrajectoryHeader = "t,x,y,theta,phi,xdot,ydot,thetadot,phidot,energy,h_front,h_back";
inline constexpr const char* kEventsHeader = "i,tau,side,mode,alpha,lambda1,lambda2,e_pre,e_post,grazing";
inline constexpr const char* kSnapshotHeader = "member,x,y,theta,phi,xdot,ydot,thetadot,phidot,status";

struct InitialConditions {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double phi = std::numbers::pi / 2.0;
  double thetadot = 10.0;
  double phidot = 0.2;

  PennyState state(const PennyParams& p) const { return PennyState::rolling(p, x, y, theta, phi, thetadot, phidot); }
};

struct EnsembleConfig {
  int count = 100;
  double perturb_bound = 0.005;
  std::uint64_t rng_seed = 20190101;
  std::vector<double> snapshot_times{0.0, 5.0, 10.0, 20.0};
};

struct ScenarioConfig {
  PennyParams params;
  TableParams table;
  InitialConditions initial;
  EngineOptions engine;
  std::optional<EnsembleConfig> ensemble;
  std::string output_dir = "out";

  void validate() const {
    params.validate();
    table.validate();
    engine.validate();
    if (ensemble) {
      if (ensemble->count < 1) throw ConfigError("ensemble.count must be at least 1");
      if (!(ensemble->perturb_bound >= 0.0)) throw ConfigError("ensemble.perturb_bound must be non-negative");
      if (ensemble->snapshot_times.empty()) throw ConfigError("ensemble.snapshot_times must not be empty");
      for (double t : ensemble->snapshot_times) {
        if (!(t >= 0.0)) throw ConfigError("snapshot times must be non-negative");
      }
    }
    const PennyState s = initial.state(params);
    for (auto side : {penny::Side::Front, penny::Side::Back}) {
      if (!(penny::contact_h(table, params, side, s) < 0.0)) {
        throw ConfigError("initial disk is not strictly inside the table");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
  }
}

inline double get_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ConfigError("'" + std::string(key) + "' in " + where + " must be a number");
  }
  return j.at(key).get<double>();
}

}  // namespace detail

inline json to_json(const ScenarioConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["penny"] = {{"R", c.params.R}, {"m", c.params.m}, {"I", c.params.I}, {"J", c.params.J}};
  j["table"] = {{"a", c.table.a}, {"b", c.table.b}};
  j["initial"] = {{"x", c.initial.x},         {"y", c.initial.y},
                  {"theta", c.initial.theta}, {"phi", c.initial.phi},
                  {"thetadot", c.initial.thetadot}, {"phidot", c.initial.phidot}};
  j["engine"] = {{"mode", engine::to_string(c.engine.mode)},
                 {"restitution", c.engine.restitution},
                 {"max_impacts", c.engine.max_impacts},
                 {"t_max", c.engine.t_max},
                 {"scan_dt", c.engine.scan_dt},
                 {"root_tol", c.engine.root_tol},
                 {"record_dt", c.engine.record_dt}};
  if (c.ensemble) {
    j["ensemble"] = {{"count", c.ensemble->count},
                     {"perturb_bound", c.ensemble->perturb_bound},
                     {"rng_seed", c.ensemble->rng_seed},
                     {"snapshot_times", c.ensemble->snapshot_times}};
  }
  j["output_dir"] = c.output_dir;
  return j;
}

inline ScenarioConfig from_json(const json& j) {
  using detail::get;
  using detail::get_number;
  detail::reject_unknown(j, {"schema_version", "penny", "table", "initial", "engine", "ensemble", "output_dir"}, "config");
  const int version = get<int>(j, "schema_version", "config");
  if (version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }

  ScenarioConfig c;
  const json& pj = j.contains("penny") ? j.at("penny") : throw ConfigError("missing key 'penny' in config");
  detail::reject_unknown(pj, {"R", "m", "I", "J"}, "penny");
  c.params = {get_number(pj, "R", "penny"), get_number(pj, "m", "penny"), get_number(pj, "I", "penny"),
              get_number(pj, "J", "penny")};

  const json& tj = j.contains("table") ? j.at("table") : throw ConfigError("missing key 'table' in config");
  detail::reject_unknown(tj, {"a", "b"}, "table");
  c.table = {get_number(tj, "a", "table"), get_number(tj, "b", "table")};

  const json& ij = j.contains("initial") ? j.at("initial") : throw ConfigError("missing key 'initial' in config");
  detail::reject_unknown(ij, {"x", "y", "theta", "phi", "thetadot", "phidot"}, "initial");
  c.initial = {get_number(ij, "x", "initial"),     get_number(ij, "y", "initial"),
               get_number(ij, "theta", "initial"), get_number(ij, "phi", "initial"),
               get_number(ij, "thetadot", "initial"), get_number(ij, "phidot", "initial")};

  const json& ej = j.contains("engine") ? j.at("engine") : throw ConfigError("missing key 'engine' in config");
  detail::reject_unknown(ej, {"mode", "restitution", "max_impacts", "t_max", "scan_dt", "root_tol", "record_dt"}, "engine");
  const auto mode = engine::parse_mode(get<std::string>(ej, "mode", "engine"));
  if (!mode) throw ConfigError("engine.mode must be elastic, plastic or specular");
  c.engine.mode = *mode;
  c.engine.restitution = get_number(ej, "restitution", "engine");
  c.engine.max_impacts = get<int>(ej, "max_impacts", "engine");
  c.engine.t_max = get_number(ej, "t_max", "engine");
  c.engine.scan_dt = get_number(ej, "scan_dt", "engine");
  c.engine.root_tol = get_number(ej, "root_tol", "engine");
  c.engine.record_dt = get_number(ej, "record_dt", "engine");

  if (j.contains("ensemble")) {
    const json& nj = j.at("ensemble");
    detail::reject_unknown(nj, {"count", "perturb_bound", "rng_seed", "snapshot_times"}, "ensemble");
    EnsembleConfig e;
    e.count = get<int>(nj, "count", "ensemble");
    e.perturb_bound = get_number(nj, "perturb_bound", "ensemble");
    e.rng_seed = get<std::uint64_t>(nj, "rng_seed", "ensemble");
    e.snapshot_times = get<std::vector<double>>(nj, "snapshot_times", "ensemble");
    c.ensemble = e;
  }
  c.output_dir = get<std::string>(j, "output_dir", "config");
  return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

inline void save_config(const ScenarioConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << to_json(c).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Presets

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"elastic-circle", "plastic-circle", "elastic-ellipse", "plastic-ellipse",
                                              "ensemble"};
  return names;
}

/// US-penny-like thin disk (R = 0.01 m, m = 0.0025 kg) on a table with b = 0.20 m
/// and a = 0.20 m (circle) or 0.15 m (ellipse), launched from the centre with
/// phi0 = pi/2, thetadot0 = 10, phidot0 = 0.2.
inline ScenarioConfig preset(const std::string& name) {
  ScenarioConfig c;
  c.params = PennyParams{0.01, 0.0025, 1.25e-7, 6.25e-8};
  c.table = TableParams{0.20, 0.20};
  c.initial = InitialConditions{};
  c.engine = EngineOptions{};
  c.output_dir = "out/" + name;
  if (name == "elastic-circle") {
    c.engine.mode = engine::ImpactMode::Elastic;
  } else if (name == "plastic-circle") {
    c.engine.mode = engine::ImpactMode::Plastic;
  } else if (name == "elastic-ellipse") {
    c.engine.mode = engine::ImpactMode::Elastic;
    c.table.a = 0.15;
  } else if (name == "plastic-ellipse") {
    c.engine.mode = engine::ImpactMode::Plastic;
    c.table.a = 0.15;
  } else if (name == "ensemble") {
    c.engine.mode = engine::ImpactMode::Elastic;
    c.engine.max_impacts = 1000000;
    c.ensemble = EnsembleConfig{};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Output

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Shortest round-trip text for a snapshot time, e.g. 5 -> "5", 0.5 -> "0.5".
inline std::string time_label(double t) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, t);
  return std::string(buf, end);
}

inline std::filesystem::path snapshot_path(const std::filesystem::path& dir, double t) {
  return dir / ("snapshot_t" + time_label(t) + ".csv");
}

inline void write_trajectory_csv(std::ostream& out, const ExecutionTrace& trace, const TableParams& table,
                                 const PennyParams& p) {
  out << kTrajectoryHeader << '\n';
  for (const auto& arc : trace.arcs) {
    for (const auto& [t, s] : arc.samples) {
      out << fmt(t) << ',' << fmt(s.x) << ',' << fmt(s.y) << ',' << fmt(s.theta) << ',' << fmt(s.phi) << ','
          << fmt(s.xdot) << ',' << fmt(s.ydot) << ',' << fmt(s.thetadot) << ',' << fmt(s.phidot) << ','
          << fmt(penny::penny_energy(s, p)) << ',' << fmt(penny::contact_h(table, p, penny::Side::Front, s)) << ','
          << fmt(penny::contact_h(table, p, penny::Side::Back, s)) << '\n';
    }
  }
}

inline void write_events_csv(std::ostream& out, const ExecutionTrace& trace, engine::ImpactMode mode) {
  out << kEventsHeader << '\n';
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const auto& e = trace.events[i];
    const double l1 = e.lambdas.size() > 0 ? e.lambdas[0] : 0.0;
    const double l2 = e.lambdas.size() > 1 ? e.lambdas[1] : 0.0;
    out << i << ',' << fmt(e.time) << ',' << penny::to_string(e.side) << ',' << engine::to_string(mode) << ','
        << fmt(e.alpha) << ',' << fmt(l1) << ',' << fmt(l2) << ',' << fmt(e.energy_before) << ','
        << fmt(e.energy_after) << ',' << (e.grazing ? 1 : 0) << '\n';
  }
}

/// Relative change of kinetic energy between the initial state and the end of the trace.
inline double energy_drift(const ExecutionTrace& trace, const PennyParams& p) {
  if (trace.arcs.empty()) return 0.0;
  const double e0 = penny::penny_energy(trace.arcs.front().start, p);
  const double e1 = trace.events.empty() ? e0 : trace.events.back().energy_after;
  return e0 == 0.0 ? 0.0 : (e1 - e0) / e0;
}

inline json summary_json(const ScenarioConfig& c, const ExecutionTrace& trace) {
  json j;
  j["termination"] = engine::to_string(trace.termination);
  j["impact_count"] = trace.impact_count();
  j["grazing_count"] = static_cast<int>(trace.events.size()) - trace.impact_count();
  j["energy_drift_rel"] = energy_drift(trace, c.params);
  j["t_final"] = trace.t_final;
  if (trace.termination == engine::Termination::Error) j["error"] = trace.error_message;
  j["config_echo"] = to_json(c);
  return j;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

}  // namespace detail

/// Simulate one scenario and write trajectory.csv, events.csv and summary.json
/// into `out_dir`. Files are written even when the engine stops on an error.
inline ExecutionTrace run_scenario(const ScenarioConfig& c, const std::filesystem::path& out_dir) {
  c.validate();
  const ExecutionTrace trace = engine::simulate(c.initial.state(c.params), c.table, c.params, c.engine);
  std::filesystem::create_directories(out_dir);
  {
    auto out = detail::open_out(out_dir / "trajectory.csv");
    write_trajectory_csv(out, trace, c.table, c.params);
  }
  {
    auto out = detail::open_out(out_dir / "events.csv");
    write_events_csv(out, trace, c.engine.mode);
  }
  {
    auto out = detail::open_out(out_dir / "summary.json");
    out << summary_json(c, trace).dump(2) << '\n';
  }
  return trace;
}

inline ExecutionTrace run_scenario(const ScenarioConfig& c) { return run_scenario(c, c.output_dir); }

// ---------------------------------------------------------------------------
// Ensemble

struct MemberResult {
  int member = 0;
  double thetadot0 = 0.0;
  double phidot0 = 0.0;
  ExecutionTrace trace;
};

struct EnsembleResult {
  std::vector<MemberResult> members;
  std::vector<std::filesystem::path> snapshot_files;
  std::vector<int> failed_members;
};

/// Uniform draw on [-bound, bound) from a 64-bit Mersenne Twister; written out
/// by hand so the stream does not depend on the standard library's distribution.
inline double uniform_symmetric(std::mt19937_64& gen, double bound) {
  const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
  return bound * (2.0 * u - 1.0);
}

/// Initial rates of member i: base (thetadot0, phidot0) plus independent
/// uniform perturbations seeded with rng_seed + i.
inline std::pair<double, double> member_rates(const ScenarioConfig& c, int member) {
  std::mt19937_64 gen(c.ensemble->rng_seed + static_cast<std::uint64_t>(member));
  const double d_theta = uniform_symmetric(gen, c.ensemble->perturb_bound);
  const double d_phi = uniform_symmetric(gen, c.ensemble->perturb_bound);
  return {c.initial.thetadot + d_theta, c.initial.phidot + d_phi};
}

/// Simulate every ensemble member (in parallel, ordered by member index in
/// the outputs) and write one snapshot CSV per requested time.
inline EnsembleResult run_ensemble(const ScenarioConfig& c, const std::filesystem::path& out_dir,
                                   unsigned threads = 0) {
  if (!c.ensemble) throw ConfigError("config has no ensemble section");
  c.validate();
  const EnsembleConfig& ens = *c.ensemble;
  EngineOptions opts = c.engine;
  opts.t_max = *std::max_element(ens.snapshot_times.begin(), ens.snapshot_times.end());

  EnsembleResult result;
  result.members.resize(static_cast<std::size_t>(ens.count));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < ens.count; i = next++) {
      MemberResult& r = result.members[static_cast<std::size_t>(i)];
      r.member = i;
      std::tie(r.thetadot0, r.phidot0) = member_rates(c, i);
      const PennyState s0 =
          PennyState::rolling(c.params, c.initial.x, c.initial.y, c.initial.theta, c.initial.phi, r.thetadot0, r.phidot0);
      try {
        r.trace = engine::simulate(s0, c.table, c.params, opts);
      } catch (const Error& e) {
        r.trace.termination = engine::Termination::Error;
        r.trace.error_message = e.what();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(ens.count));
  {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  }

  std::filesystem::create_directories(out_dir);
  std::set<int> failed;
  std::vector<double> times = ens.snapshot_times;
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  for (double T : times) {
    const auto path = snapshot_path(out_dir, T);
    auto out = detail::open_out(path);
    out << kSnapshotHeader << '\n';
    for (const auto& r : result.members) {
      std::optional<PennyState> s;
      if (r.trace.termination != engine::Termination::Error || T <= r.trace.t_final) s = r.trace.state_at(T, c.params);
      if (!s) failed.insert(r.member);
      const PennyState v = s.value_or(PennyState{NAN, NAN, NAN, NAN, NAN, NAN, NAN, NAN});
      out << r.member << ',' << fmt(v.x) << ',' << fmt(v.y) << ',' << fmt(v.theta) << ',' << fmt(v.phi) << ','
          << fmt(v.xdot) << ',' << fmt(v.ydot) << ',' << fmt(v.thetadot) << ',' << fmt(v.phidot) << ','
          << (s ? "ok" : "failed") << '\n';
    }
    result.snapshot_files.push_back(path);
  }
  result.failed_members.assign(failed.begin(), failed.end());

  json summary;
  summary["count"] = ens.count;
  summary["failed_members"] = result.failed_members;
  summary["snapshot_times"] = times;
  json files = json::array();
  for (const auto& f : result.snapshot_files) files.push_back(f.filename().string());
  summary["snapshot_files"] = files;
  summary["config_echo"] = to_json(c);
  auto out = detail::open_out(out_dir / "ensemble_summary.json");
  out << summary.dump(2) << '\n';
  return result;
}

}  // namespace nhimpact::scenario
