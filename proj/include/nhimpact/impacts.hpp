#pragma once

// Impact maps at a boundary configuration q with h(q) = 0:
//   specular_reflect  holonomic reflection with restitution e
//   elastic_impact    momentum jump in span{omega^k, dh}, energy conserved,
//                     post-impact velocity back in the distribution
//   plastic_impact    specular reflection followed by g-orthogonal projection

#include <cmath>
#include <functional>
#include <string>

#include "nhimpact/errors.hpp"
#include "nhimpact/geometry.hpp"

namespace nhimpact {

/// Relative size of dh(v) below which an arrival counts as tangential.
inline constexpr double kGrazingTolerance = 1e-10;
/// Relative constraint residual accepted in a pre-impact velocity.
inline constexpr double kConstraintInputTolerance = 1e-9;
/// Relative slack for the post-impact direction check.
inline constexpr double kDirectionTolerance = 1e-12;

/// Signed boundary function h (feasible interior h < 0) and its differential.
struct ImpactChart {
  std::function<double(const Vector&)> h;
  std::function<Covector(const Vector&)> dh;
};

struct ImpactOutcome {
  Vector post_velocity;
  double multiplier_alpha = 0.0;
  Vector multiplier_lambdas;
  double energy_before = 0.0;
  double energy_after = 0.0;
  bool grazing = false;
};

namespace detail {

inline Covector chart_differential(const ImpactChart& chart, const Vector& q, Eigen::Index n) {
  Covector dh = chart.dh(q);
  require_dim(dh, n, "impact chart differential");
  if (!(dh.norm() > 0.0) || !dh.allFinite()) {
    throw DegeneracyError("impact chart differential vanishes at the impact configuration");
  }
  return dh;
}

inline bool is_grazing(const Covector& dh, const Vector& v) {
  return std::abs(dh.dot(v)) < kGrazingTolerance * v.norm() * dh.norm() || v.norm() == 0.0;
}

inline void require_in_distribution(const Matrix& omega, const Vector& v) {
  for (Eigen::Index k = 0; k < omega.rows(); ++k) {
    const double residual = std::abs(omega.row(k).dot(v));
    if (residual > kConstraintInputTolerance * v.norm() * omega.row(k).norm()) {
      throw PreconditionError("pre-impact velocity violates constraint " + std::to_string(k) +
                              " (residual " + std::to_string(residual) + ")");
    }
  }
}

inline void require_jointly_independent(const Matrix& omega, const Covector& dh) {
  Matrix stacked(omega.rows() + 1, omega.cols());
  stacked.topRows(omega.rows()) = omega;
  stacked.row(omega.rows()) = dh.transpose();
  if (!rows_independent(stacked)) {
    throw DegeneracyError("constraint one-forms and dh are linearly dependent");
  }
}

// The normal velocity must change sign (or vanish): an outgoing arrival has to
// leave moving inward, and vice versa.
inline void require_reversed(const Covector& dh, const Vector& before, const Vector& after) {
  const double in = dh.dot(before);
  const double out = dh.dot(after);
  const double slack = kDirectionTolerance * dh.norm() * std::max(before.norm(), after.norm());
  if ((in > 0.0 && out > slack) || (in < 0.0 && out < -slack)) {
    throw NonPhysicalImpactError("impact map leaves the normal velocity direction unchanged (dh(v-) = " +
                                 std::to_string(in) + ", dh(v+) = " + std::to_string(out) + ")");
  }
}

inline ImpactOutcome unchanged(const MetricFactor& factor, const Vector& v, Eigen::Index m) {
  ImpactOutcome out;
  out.post_velocity = v;
  out.multiplier_lambdas = Vector::Zero(m);
  out.energy_before = out.energy_after = 0.5 * v.dot(factor.flat(v));
  out.grazing = true;
  return out;
}

}  // namespace detail

/// v+ = v - (1 + e) dh(v) / <dh, dh> grad h, grad h = dh^sharp.
inline ImpactOutcome specular_reflect(const MetricTensor& metric, const Vector& q, const ImpactChart& chart,
                                      const Vector& v, double restitution) {
  if (!(restitution >= 0.0 && restitution <= 1.0)) {
    throw PreconditionError("restitution must lie in [0, 1]");
  }
  detail::require_dim(v, metric.dim, "impact velocity");
  const MetricFactor factor(metric, q);
  const Covector dh = detail::chart_differential(chart, q, metric.dim);
  if (detail::is_grazing(dh, v)) return detail::unchanged(factor, v, 0);

  const Vector grad = factor.sharp(dh);
  const double alpha = -(1.0 + restitution) * dh.dot(v) / dh.dot(grad);

  ImpactOutcome out;
  out.post_velocity = v + alpha * grad;
  out.multiplier_alpha = alpha;
  out.multiplier_lambdas = Vector::Zero(0);
  out.energy_before = 0.5 * v.dot(factor.flat(v));
  out.energy_after = 0.5 * out.post_velocity.dot(factor.flat(out.post_velocity));
  return out;
}

/// Elastic nonholonomic impact.
///
/// With p+ = p- + lambda_k omega^k + alpha dh, the constraint rows give
/// lambda(alpha) = alpha mu with mu = -A^{-1} b, where A = <omega^k, omega^l> and
/// b_l = <dh, omega^l>. Energy conservation is then alpha * (linear in alpha) = 0;
/// the zero root is factored out and the remaining linear factor gives the
/// unique nonzero alpha. Its denominator is the Schur complement
/// <dh, dh> - b^T A^{-1} b, positive whenever {omega^k, dh} are independent.
inline ImpactOutcome elastic_impact(const MetricTensor& metric, const ConstraintSet& constraints,
                                    const Vector& q, const ImpactChart& chart, const Vector& v) {
  if (constraints.dim != metric.dim) throw DimensionError("constraint/metric dimension mismatch");
  detail::require_dim(v, metric.dim, "impact velocity");
  const MetricFactor factor(metric, q);
  const Matrix omega = constraints.matrix(q);
  const Eigen::Index m = omega.rows();
  const Covector dh = detail::chart_differential(chart, q, metric.dim);
  detail::require_jointly_independent(omega, dh);
  detail::require_in_distribution(omega, v);
  if (detail::is_grazing(dh, v)) return detail::unchanged(factor, v, m);

  const Vector grad = factor.sharp(dh);
  const double dh_dh = dh.dot(grad);
  const double dh_v = dh.dot(v);

  Vector mu = Vector::Zero(m);
  double schur = dh_dh;
  double linear = dh_v;
  if (m > 0) {
    const GramMatrices gram = gram_matrices(factor, omega);
    const Vector b = omega * grad;
    const Vector c = omega * v;  // <p-, omega^k>; zero up to the input tolerance
    mu = -gram.lower * b;
    // mu^T A mu + 2 mu.b + <dh,dh>, written in the cancellation-free form.
    schur = dh_dh - b.dot(gram.lower * b);
    linear += mu.dot(c);
  }
  if (!(schur > 0.0)) throw DegeneracyError("elastic impact system is singular");

  const double alpha = -2.0 * linear / schur;
  const Vector lambdas = alpha * mu;
  Covector jump = alpha * dh;
  if (m > 0) jump += omega.transpose() * lambdas;

  ImpactOutcome out;
  out.post_velocity = v + factor.sharp(jump);
  out.multiplier_alpha = alpha;
  out.multiplier_lambdas = lambdas;
  out.energy_before = 0.5 * v.dot(factor.flat(v));
  out.energy_after = 0.5 * out.post_velocity.dot(factor.flat(out.post_velocity));
  detail::require_reversed(dh, v, out.post_velocity);
  return out;
}

/// Plastic nonholonomic impact: pi_Delta composed with the e = 1 reflection,
///   v+ = v - 2 dh(v) / <dh,dh> (grad h - a_ij omega^i(grad h) W^j).
/// Reported multipliers are those of the equivalent momentum jump
/// alpha dh + lambda_k omega^k.
inline ImpactOutcome plastic_impact(const MetricTensor& metric, const ConstraintSet& constraints,
                                    const Vector& q, const ImpactChart& chart, const Vector& v) {
  if (constraints.dim != metric.dim) throw DimensionError("constraint/metric dimension mismatch");
  detail::require_dim(v, metric.dim, "impact velocity");
  const MetricFactor factor(metric, q);
  const Matrix omega = constraints.matrix(q);
  const Eigen::Index m = omega.rows();
  const Covector dh = detail::chart_differential(chart, q, metric.dim);
  detail::require_jointly_independent(omega, dh);
  detail::require_in_distribution(omega, v);
  if (detail::is_grazing(dh, v)) return detail::unchanged(factor, v, m);

  const Vector grad = factor.sharp(dh);
  const double alpha = -2.0 * dh.dot(v) / dh.dot(grad);

  Vector direction = grad;
  Vector lambdas = Vector::Zero(m);
  if (m > 0) {
    const GramMatrices gram = gram_matrices(factor, omega);
    const Vector coeffs = gram.lower * (omega * grad);
    direction -= factor.sharp(omega) * coeffs;
    lambdas = -alpha * coeffs;
  }

  ImpactOutcome out;
  out.post_velocity = v + alpha * direction;
  out.multiplier_alpha = alpha;
  out.multiplier_lambdas = lambdas;
  out.energy_before = 0.5 * v.dot(factor.flat(v));
  out.energy_after = 0.5 * out.post_velocity.dot(factor.flat(out.post_velocity));
  detail::require_reversed(dh, v, out.post_velocity);
  return out;
}

}  // namespace nhimpact
