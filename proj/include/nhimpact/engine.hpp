#pragma once

// Hybrid execution of the penny on an elliptical table: exact free flight,
// boundary crossings located by scanning the closed-form flow and bisecting,
// then an impact map at the crossing.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nhimpact/errors.hpp"
#include "nhimpact/impacts.hpp"
#include "nhimpact/penny.hpp"

namespace nhimpact::engine {

using penny::PennyParams;
using penny::PennyState;
using penny::Side;
using penny::TableParams;

enum class ImpactMode { Elastic, Plastic, Specular };

inline const char* to_string(ImpactMode mode) {
  switch (mode) {
    case ImpactMode::Elastic: return "elastic";
    case ImpactMode::Plastic: return "plastic";
    case ImpactMode::Specular: return "specular";
  }
  return "unknown";
}

inline std::optional<ImpactMode> parse_mode(const std::string& name) {
  if (name == "elastic") return ImpactMode::Elastic;
  if (name == "plastic") return ImpactMode::Plastic;
  if (name == "specular") return ImpactMode::Specular;
  return std::nullopt;
}

struct EngineOptions {
  ImpactMode mode = ImpactMode::Elastic;
  double restitution = 1.0;  // specular mode only
  int max_impacts = 20;
  double t_max = 1000.0;
  double scan_dt = 1e-3;
  double root_tol = 1e-12;
  double record_dt = 0.01;

  void validate() const {
    if (!(scan_dt > 0.0)) throw ConfigError("scan_dt must be positive");
    if (!(root_tol > 0.0)) throw ConfigError("root_tol must be positive");
    if (!(record_dt > 0.0)) throw ConfigError("record_dt must be positive");
    if (!(t_max >= 0.0)) throw ConfigError("t_max must be non-negative");
    if (max_impacts < 1) throw ConfigError("max_impacts must be at least 1");
    if (!(restitution >= 0.0 && restitution <= 1.0)) throw ConfigError("restitution must lie in [0, 1]");
    if (mode == ImpactMode::Specular) {
      throw ConfigError(
          "specular mode leaves the rolling distribution, and the penny flow is only defined on it; "
          "use elastic or plastic");
    }
  }
};

struct ImpactEvent {
  double time = 0.0;
  Side side = Side::Front;
  penny::Vector4 configuration = penny::Vector4::Zero();
  penny::Vector4 pre_velocity = penny::Vector4::Zero();
  penny::Vector4 post_velocity = penny::Vector4::Zero();
  double alpha = 0.0;
  std::vector<double> lambdas;
  double energy_before = 0.0;
  double energy_after = 0.0;
  bool grazing = false;
};

struct Sample {
  double t = 0.0;
  PennyState state;
};

/// One continuous segment of the execution, from a start state (initial or
/// post-impact) over [t_begin, t_end].
struct Arc {
  double t_begin = 0.0;
  double t_end = 0.0;
  PennyState start;
  std::vector<Sample> samples;
};

enum class Termination { TMax, MaxImpacts, Error };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::TMax: return "t_max";
    case Termination::MaxImpacts: return "max_impacts";
    case Termination::Error: return "error";
  }
  return "unknown";
}

struct ExecutionTrace {
  std::vector<Arc> arcs;
  std::vector<ImpactEvent> events;
  Termination termination = Termination::TMax;
  std::string error_message;
  double t_final = 0.0;  // end of the last arc

  /// Non-grazing impacts.
  int impact_count() const {
    return static_cast<int>(std::count_if(events.begin(), events.end(), [](const ImpactEvent& e) { return !e.grazing; }));
  }

  /// State at absolute time t, re-flowed exactly from the start of the arc
  /// containing t. Returns nullopt past the end of the trace.
  std::optional<PennyState> state_at(double t, const PennyParams& p) const {
    if (arcs.empty() || t < arcs.front().t_begin || t > t_final) return std::nullopt;
    auto it = std::upper_bound(arcs.begin(), arcs.end(), t, [](double value, const Arc& a) { return value < a.t_begin; });
    const Arc& arc = *std::prev(it);
    return penny::closed_form_flow(arc.start, p, t - arc.t_begin);
  }
};

struct NextImpact {
  double time = 0.0;
  Side side = Side::Front;
};

/// Two crossings closer than this in time are treated as simultaneous.
inline constexpr double kTieTime = 1e-12;

/// Crossings this soon after the start of a search are the contact that was
/// just processed (typically a grazing touch) and are ignored.
inline constexpr double kLiftoffTime = 1e-9;

namespace detail {

/// Upper bound on the contact-point speed along the free flow.
inline double contact_speed_bound(const PennyState& s, const PennyParams& p) {
  return p.R * (std::abs(s.thetadot) + std::abs(s.phidot));
}

/// Scan step guaranteeing the contact point moves less than R/2 per step.
inline double effective_scan_dt(const PennyState& s, const PennyParams& p, const EngineOptions& opts) {
  const double speed = contact_speed_bound(s, p);
  if (speed <= 0.0) return opts.scan_dt;
  return std::min(opts.scan_dt, 0.5 * p.R / speed);
}

/// Bisection for a root of H_side(flow(s, t)) in [lo, hi] with H(lo) < 0 <= H(hi).
/// Refines to time resolution and returns the inside endpoint, which must
/// satisfy |H| < root_tol.
inline double bisect(const PennyState& s, const TableParams& table, const PennyParams& p, Side side, double lo,
                     double hi, double root_tol) {
  auto H = [&](double t) { return penny::contact_h(table, p, side, penny::closed_form_flow(s, p, t)); };
  double h_lo = H(lo);
  double h_hi = H(hi);
  for (int iter = 0; iter < 2000; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double h_mid = H(mid);
    if (h_mid < 0.0) {
      lo = mid;
      h_lo = h_mid;
    } else {
      hi = mid;
      h_hi = h_mid;
    }
  }
  if (std::abs(h_lo) < root_tol) return lo;
  if (std::abs(h_hi) < root_tol) return hi;
  throw InvalidStateError("event location did not reach |H| < root_tol (stalled at |H| = " +
                          std::to_string(std::min(std::abs(h_lo), std::abs(h_hi))) + ")");
}

/// Rate of change of H_side along the flow.
inline double contact_hdot(const TableParams& table, const PennyParams& p, Side side, const PennyState& st) {
  return penny::contact_dh(table, p, side, st.configuration()).dot(st.velocity());
}

/// A contact can touch the wall and return between two scan points without a
/// sign change at either end. If H rises then falls over [lo, hi], locate the
/// maximum; when it reaches the boundary return a bracket end with H >= 0.
inline std::optional<double> tangency_crossing(const PennyState& s, const TableParams& table, const PennyParams& p,
                                               Side side, double lo, double hi, double hdot_lo, double hdot_hi) {
  if (!(hdot_lo > 0.0 && hdot_hi < 0.0)) return std::nullopt;
  auto flow = [&](double t) { return penny::closed_form_flow(s, p, t); };
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (contact_hdot(table, p, side, flow(mid)) > 0.0) lo = mid;
    else hi = mid;
  }
  for (double t : {lo, hi}) {
    if (penny::contact_h(table, p, side, flow(t)) >= 0.0) return t;
  }
  return std::nullopt;
}

}  // namespace detail

/// Earliest boundary crossing of either contact point within (0, horizon].
/// A contact already on the boundary (a just-bounced state) is armed only
/// once its H is strictly negative, so the same impact is not re-detected.
inline std::optional<NextImpact> find_next_impact(const PennyState& s, const TableParams& table, const PennyParams& p,
                                                  const EngineOptions& opts, double horizon) {
  const Side sides[2] = {Side::Front, Side::Back};
  double h_prev[2], hdot_prev[2];
  for (int k = 0; k < 2; ++k) {
    h_prev[k] = penny::contact_h(table, p, sides[k], s);
    hdot_prev[k] = detail::contact_hdot(table, p, sides[k], s);
    if (h_prev[k] > opts.root_tol) {
      throw InvalidStateError(std::string(penny::to_string(sides[k])) + " contact is outside the table (H = " +
                              std::to_string(h_prev[k]) + ")");
    }
  }
  if (!(horizon > 0.0) || detail::contact_speed_bound(s, p) == 0.0) return std::nullopt;

  const double dt = detail::effective_scan_dt(s, p, opts);
  double t_prev = 0.0;
  for (long step = 1;; ++step) {
    const double t = std::min(static_cast<double>(step) * dt, horizon);
    const PennyState st = penny::closed_form_flow(s, p, t);
    std::optional<NextImpact> best;
    for (int k = 0; k < 2; ++k) {
      const double h = penny::contact_h(table, p, sides[k], st);
      const double hdot = detail::contact_hdot(table, p, sides[k], st);
      std::optional<double> upper;
      if (h_prev[k] < 0.0 && h >= 0.0) {
        upper = t;
      } else if (h_prev[k] < 0.0 && h < 0.0) {
        upper = detail::tangency_crossing(s, table, p, sides[k], t_prev, t, hdot_prev[k], hdot);
      }
      const double root = upper ? detail::bisect(s, table, p, sides[k], t_prev, *upper, opts.root_tol) : 0.0;
      if (upper && root > kLiftoffTime) {
        if (best && std::abs(best->time - root) < kTieTime) {
          throw InvalidStateError("front and back contacts reach the boundary simultaneously");
        }
        if (!best || root < best->time) best = NextImpact{root, sides[k]};
      }
      h_prev[k] = h;
      hdot_prev[k] = hdot;
    }
    if (best) return best;
    if (t >= horizon) return std::nullopt;
    t_prev = t;
  }
}

/// Apply the configured impact map to a boundary state.
inline ImpactEvent apply_impact(const PennyState& at, double time, Side side, const TableParams& table,
                                const PennyParams& p, const EngineOptions& opts) {
  const MetricTensor metric = penny::penny_metric(p);
  const ConstraintSet constraints = penny::penny_constraints(p);
  const ImpactChart chart = penny::impact_chart(table, p, side);
  const Vector q = at.configuration();
  const Vector v = at.velocity();

  ImpactOutcome outcome;
  switch (opts.mode) {
    case ImpactMode::Elastic: outcome = elastic_impact(metric, constraints, q, chart, v); break;
    case ImpactMode::Plastic: outcome = plastic_impact(metric, constraints, q, chart, v); break;
    case ImpactMode::Specular: outcome = specular_reflect(metric, q, chart, v, opts.restitution); break;
  }

  ImpactEvent ev;
  ev.time = time;
  ev.side = side;
  ev.configuration = at.configuration();
  ev.pre_velocity = at.velocity();
  ev.post_velocity = outcome.post_velocity;
  ev.alpha = outcome.multiplier_alpha;
  ev.lambdas.assign(outcome.multiplier_lambdas.data(),
                    outcome.multiplier_lambdas.data() + outcome.multiplier_lambdas.size());
  ev.energy_before = outcome.energy_before;
  ev.energy_after = outcome.energy_after;
  ev.grazing = outcome.grazing;
  return ev;
}

/// Flow to the next impact and apply the impact map. Returns nullopt when no
/// crossing occurs within `horizon`.
inline std::optional<std::pair<PennyState, ImpactEvent>> step(const PennyState& s, double t0,
                                                              const TableParams& table, const PennyParams& p,
                                                              const EngineOptions& opts, double horizon) {
  const auto next = find_next_impact(s, table, p, opts, horizon);
  if (!next) return std::nullopt;
  const PennyState at = penny::closed_form_flow(s, p, next->time);
  ImpactEvent ev = apply_impact(at, t0 + next->time, next->side, table, p, opts);
  PennyState after = PennyState::from(ev.configuration, ev.post_velocity);
  if (!ev.grazing) {
    const penny::Vector4 dH = penny::contact_dh(table, p, next->side, ev.configuration);
    if (!(dH.dot(ev.post_velocity) < 0.0)) {
      throw NonPhysicalImpactError("post-impact velocity does not leave the boundary");
    }
  }
  return std::make_pair(after, std::move(ev));
}

namespace detail {

inline Arc sample_arc(const PennyState& start, double t_begin, double t_end, const PennyParams& p, double record_dt) {
  Arc arc{t_begin, t_end, start, {}};
  arc.samples.push_back({t_begin, start});
  const long first = static_cast<long>(std::floor(t_begin / record_dt)) + 1;
  for (long k = first;; ++k) {
    const double t = static_cast<double>(k) * record_dt;
    if (t >= t_end) break;
    arc.samples.push_back({t, penny::closed_form_flow(start, p, t - t_begin)});
  }
  if (t_end > t_begin) arc.samples.push_back({t_end, penny::closed_form_flow(start, p, t_end - t_begin)});
  return arc;
}

}  // namespace detail

/// Alternate flow and impacts until t_max or max_impacts. Engine failures end
/// the trace with Termination::Error rather than throwing.
inline ExecutionTrace simulate(const PennyState& initial, const TableParams& table, const PennyParams& p,
                               const EngineOptions& opts) {
  p.validate();
  table.validate();
  opts.validate();
  if (!initial.satisfies_rolling(p)) throw PreconditionError("initial state violates the rolling constraints");
  for (Side side : {Side::Front, Side::Back}) {
    if (!(penny::contact_h(table, p, side, initial) < 0.0)) {
      throw InvalidStateError(std::string("initial ") + penny::to_string(side) + " contact is not strictly inside the table");
    }
  }

  ExecutionTrace trace;
  PennyState state = initial;
  double t = 0.0;
  int impacts = 0;
  try {
    while (true) {
      const auto result = step(state, t, table, p, opts, opts.t_max - t);
      if (!result) {
        trace.arcs.push_back(detail::sample_arc(state, t, opts.t_max, p, opts.record_dt));
        trace.t_final = opts.t_max;
        trace.termination = Termination::TMax;
        break;
      }
      const auto& [after, event] = *result;
      trace.arcs.push_back(detail::sample_arc(state, t, event.time, p, opts.record_dt));
      trace.t_final = event.time;
      state = after;
      t = event.time;
      trace.events.push_back(event);
      if (!event.grazing && ++impacts >= opts.max_impacts) {
        trace.termination = Termination::MaxImpacts;
        break;
      }
    }
  } catch (const Error& e) {
    trace.termination = Termination::Error;
    trace.error_message = e.what();
  }
  return trace;
}

/// Classical RK4 on penny_ode_rhs with fixed step dt (the last step is shortened).
inline PennyState rk4_flow(const PennyState& s, const PennyParams& p, double t, double dt) {
  if (!(dt > 0.0)) throw PreconditionError("rk4 step must be positive");
  penny::Phase y = s.phase();
  auto f = [&](const penny::Phase& z) { return penny::penny_ode_rhs(PennyState::from(z), p); };
  const long n = static_cast<long>(std::ceil(t / dt - 1e-9));
  for (long i = 0; i < n; ++i) {
    const double h = std::min(dt, t - static_cast<double>(i) * dt);
    const penny::Phase k1 = f(y);
    const penny::Phase k2 = f(y + 0.5 * h * k1);
    const penny::Phase k3 = f(y + 0.5 * h * k2);
    const penny::Phase k4 = f(y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return PennyState::from(y);
}

}  // namespace nhimpact::engine
