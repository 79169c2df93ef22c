#pragma once

// The vertical rolling disk ("penny") on an elliptical table.
//
// Configuration q = (x, y, theta, phi): contact point, rolling angle, heading.
// Rolling without slipping: xdot = R thetadot cos(phi), ydot = R thetadot sin(phi).
// Angles are kept unwrapped.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>

#include "nhimpact/errors.hpp"
#include "nhimpact/geometry.hpp"
#include "nhimpact/impacts.hpp"

namespace nhimpact::penny {

using Vector4 = Eigen::Vector4d;
using Matrix4 = Eigen::Matrix4d;
using Point2 = Eigen::Vector2d;
/// (x, y, theta, phi, xdot, ydot, thetadot, phidot)
using Phase = Eigen::Matrix<double, 8, 1>;


struct PennyParams {
  double R = 0.01;         // radius [m]
  double m = 0.0025;       // mass [kg]
  double I = 1.25e-7;      // about the axis perpendicular to the disk plane [kg m^2]
  double J = 6.25e-8;      // about an in-plane axis [kg m^2]

  /// Homogeneous thin disk: I = m R^2 / 2, J = m R^2 / 4.
  static PennyParams thin_disk(double radius, double mass) {
    return {radius, mass, 0.5 * mass * radius * radius, 0.25 * mass * radius * radius};
  }

  void validate() const {
    if (!(R > 0.0 && m > 0.0 && I > 0.0 && J > 0.0)) {
      throw ConfigError("penny parameters R, m, I, J must all be positive");
    }
  }
};

/// Elliptical table h(x, y) = x^2/a^2 + y^2/b^2 - 1.
struct TableParams {
  double a = 0.2;
  double b = 0.2;

  void validate() const {
    if (!(a > 0.0 && b > 0.0)) throw ConfigError("table semi-axes must be positive");
  }
  /// True when the table is not comfortably larger than the disk (a or b < 5R).
  bool cramped_for(const PennyParams& p) const { return a < 5.0 * p.R || b < 5.0 * p.R; }

  double h(double x, double y) const { return x * x / (a * a) + y * y / (b * b) - 1.0; }
  Point2 grad(double x, double y) const { return {2.0 * x / (a * a), 2.0 * y / (b * b)}; }
};

enum class Side { Front, Back };

inline const char* to_string(Side side) { return side == Side::Front ? "front" : "back"; }
inline double side_sign(Side side) { return side == Side::Front ? 1.0 : -1.0; }

struct PennyState {
  double x = 0.0, y = 0.0, theta = 0.0, phi = 0.0;
  double xdot = 0.0, ydot = 0.0, thetadot = 0.0, phidot = 0.0;

  /// Rolling-consistent state from positions and the two free rates.
  static PennyState rolling(const PennyParams& p, double x, double y, double theta, double phi,
                            double thetadot, double phidot) {
    return {x, y, theta, phi, p.R * thetadot * std::cos(phi), p.R * thetadot * std::sin(phi), thetadot,
            phidot};
  }

  Vector4 configuration() const { return {x, y, theta, phi}; }
  Vector4 velocity() const { return {xdot, ydot, thetadot, phidot}; }
  Phase phase() const {
    Phase out;
    out << x, y, theta, phi, xdot, ydot, thetadot, phidot;
    return out;
  }
  static PennyState from(const Eigen::Ref<const Vector4>& q, const Eigen::Ref<const Vector4>& v) {
    return {q(0), q(1), q(2), q(3), v(0), v(1), v(2), v(3)};
  }
  static PennyState from(const Phase& s) { return {s(0), s(1), s(2), s(3), s(4), s(5), s(6), s(7)}; }

  /// Larger of the two rolling-constraint residuals.
  double rolling_residual(const PennyParams& p) const {
    return std::max(std::abs(xdot - p.R * thetadot * std::cos(phi)),
                    std::abs(ydot - p.R * thetadot * std::sin(phi)));
  }
  bool satisfies_rolling(const PennyParams& p, double rel = 1e-9) const {
    return rolling_residual(p) < rel * (1.0 + std::abs(thetadot) * p.R);
  }
};

/// diag(m, m, I, J).
inline MetricTensor penny_metric(const PennyParams& p) {
  return MetricTensor::constant(Vector4(p.m, p.m, p.I, p.J).asDiagonal().toDenseMatrix());
}

/// omega^1 = dx - R cos(phi) dtheta, omega^2 = dy - R sin(phi) dtheta.
inline ConstraintSet penny_constraints(const PennyParams& p) {
  const double R = p.R;
  ConstraintSet out{4, {}};
  out.forms.push_back(OneForm{[R](const Vector& q) {
    Covector w(4);
    w << 1.0, 0.0, -R * std::cos(q(3)), 0.0;
    return w;
  }});
  out.forms.push_back(OneForm{[R](const Vector& q) {
    Covector w(4);
    w << 0.0, 1.0, -R * std::sin(q(3)), 0.0;
    return w;
  }});
  return out;
}

namespace detail {

// sin(u)/u, accurate near zero.
inline double sinc(double u) {
  if (std::abs(u) < 1e-4) return 1.0 - u * u / 6.0;
  return std::sin(u) / u;
}

}  // namespace detail

/// Exact free flight from a rolling-consistent state: phi and theta advance
/// linearly and the contact point traces a circle of radius |Omega R / omega|.
///
/// The displacement uses sin(phi0 + w t) - sin(phi0) = 2 cos(phi0 + w t/2) sin(w t/2),
/// so it is free of cancellation for small w and is exactly the straight line
/// x0 + R Omega cos(phi0) t at w = 0.
inline PennyState closed_form_flow(const PennyState& s, const PennyParams& p, double t) {
  if (t == 0.0) return s;
  const double Omega = s.thetadot;
  const double w = s.phidot;
  const double speed = p.R * Omega;
  PennyState out = s;
  out.theta = s.theta + Omega * t;
  out.phi = s.phi + w * t;
  const double half = 0.5 * w * t;
  const double chord = speed * t * detail::sinc(half);
  out.x = s.x + chord * std::cos(s.phi + half);
  out.y = s.y + chord * std::sin(s.phi + half);
  out.xdot = speed * std::cos(out.phi);
  out.ydot = speed * std::sin(out.phi);
  return out;
}

/// Vector field of the constrained equations: J phi'' = 0, (I + m R^2) theta'' = 0,
/// with xdot, ydot slaved to the rolling constraints.
inline Phase penny_ode_rhs(const PennyState& s, const PennyParams& p) {
  Phase out;
  const double roll = p.R * s.thetadot * s.phidot;
  out << s.xdot, s.ydot, s.thetadot, s.phidot, -roll * std::sin(s.phi), roll * std::cos(s.phi), 0.0, 0.0;
  return out;
}

struct ContactPoints {
  Point2 front;
  Point2 back;
};

inline ContactPoints contact_points(const PennyState& s, const PennyParams& p) {
  const Point2 offset(p.R * std::cos(s.phi), p.R * std::sin(s.phi));
  const Point2 center(s.x, s.y);
  return {center + offset, center - offset};
}

/// H(q) = h(x +- R cos phi, y +- R sin phi) on the 4-dimensional configuration space.
inline double contact_h(const TableParams& table, const PennyParams& p, Side side, const Vector4& q) {
  const double sg = side_sign(side);
  return table.h(q(0) + sg * p.R * std::cos(q(3)), q(1) + sg * p.R * std::sin(q(3)));
}

inline double contact_h(const TableParams& table, const PennyParams& p, Side side, const PennyState& s) {
  return contact_h(table, p, side, s.configuration());
}

/// dH = (h_x, h_y, 0, +-R (h_y cos phi - h_x sin phi)), partials at the contact point.
inline Vector4 contact_dh(const TableParams& table, const PennyParams& p, Side side, const Vector4& q) {
  const double sg = side_sign(side);
  const double c = std::cos(q(3));
  const double s = std::sin(q(3));
  const Point2 g = table.grad(q(0) + sg * p.R * c, q(1) + sg * p.R * s);
  return {g(0), g(1), 0.0, sg * p.R * (g(1) * c - g(0) * s)};
}

inline ImpactChart impact_chart(const TableParams& table, const PennyParams& p, Side side) {
  return ImpactChart{
      [=](const Vector& q) { return contact_h(table, p, side, Vector4(q)); },
      [=](const Vector& q) -> Covector { return contact_dh(table, p, side, Vector4(q)); },
  };
}

/// Tolerance on |H| for penny_preimpact_map's boundary precondition.
inline constexpr double kOnBoundaryTolerance = 1e-9;

/// Unconstrained e = 1 bounce written out for the penny:
///   xdot+ = xdot- + (C/m) h_x, ydot+ = ydot- + (C/m) h_y, thetadot+ = thetadot-,
///   phidot+ = phidot- + (C/J) sR (h_y cos phi - h_x sin phi),
/// with the impact multiplier
///   C = -2 [h_x xdot + h_y ydot + sR (h_y cos phi - h_x sin phi) phidot]
///       / ( (h_x^2 + h_y^2)/m + R^2 (h_y cos phi - h_x sin phi)^2 / J )
/// and sR = +R for the front contact, -R for the back.
inline Vector4 penny_preimpact_map(const PennyState& s, const TableParams& table, const PennyParams& p,
                                   Side side) {
  const double H = contact_h(table, p, side, s);
  if (!(std::abs(H) < kOnBoundaryTolerance)) {
    throw PreconditionError("contact point is not on the table boundary (|H| = " + std::to_string(std::abs(H)) +
                            ")");
  }
  const double sR = side_sign(side) * p.R;
  const double c = std::cos(s.phi);
  const double sn = std::sin(s.phi);
  const Point2 g = table.grad(s.x + sR * c, s.y + sR * sn);
  const double hx = g(0);
  const double hy = g(1);
  const double turn = hy * c - hx * sn;
  const double denom = (hx * hx + hy * hy) / p.m + p.R * p.R * turn * turn / p.J;
  if (!(denom > 0.0)) throw DegeneracyError("impact multiplier denominator vanishes");
  const double C = -2.0 * (hx * s.xdot + hy * s.ydot + sR * turn * s.phidot) / denom;
  return {s.xdot + C / p.m * hx, s.ydot + C / p.m * hy, s.thetadot, s.phidot + C / p.J * sR * turn};
}

/// pi_Delta at heading phi as the explicit block matrix
///   (I + m R^2) pi = [A B; C D],
///   A = m R^2 [c^2 sc; sc s^2], B = I R [c 0; s 0], C = m R [c s; 0 0], D = [I 0; 0 I + m R^2].
inline Matrix4 penny_projection_matrix(double phi, const PennyParams& p) {
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  const double mR2 = p.m * p.R * p.R;
  Matrix4 out;
  out << mR2 * c * c, mR2 * s * c, p.I * p.R * c, 0.0,  //
      mR2 * s * c, mR2 * s * s, p.I * p.R * s, 0.0,     //
      p.m * p.R * c, p.m * p.R * s, p.I, 0.0,           //
      0.0, 0.0, 0.0, p.I + mR2;
  return out / (p.I + mR2);
}

inline Matrix4 penny_projection_matrix(const PennyState& s, const PennyParams& p) {
  return penny_projection_matrix(s.phi, p);
}

inline double penny_energy(const PennyState& s, const PennyParams& p) {
  return 0.5 * (p.m * (s.xdot * s.xdot + s.ydot * s.ydot) + p.I * s.thetadot * s.thetadot +
                p.J * s.phidot * s.phidot);
}

}  // namespace nhimpact::penny
