#pragma once

// Kinetic-energy geometry on a configuration space Q = R^n: the metric g, its
// musical isomorphisms, constraint one-forms and the g-orthogonal projection
// onto the constraint distribution.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nhimpact/errors.hpp"

namespace nhimpact {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Covectors are stored as column vectors; the pairing with a velocity is a
/// plain dot product.
using Covector = Eigen::VectorXd;

inline constexpr double kMaxMetricCondition = 1e12;
inline constexpr double kIndependenceThreshold = 1e-10;

namespace detail {

inline void require_dim(const Eigen::Ref<const Vector>& x, Eigen::Index n, const char* what) {
  if (x.size() != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) +
                         ", got " + std::to_string(x.size()));
  }
}

// Smallest/largest singular value ratio of the rows of `stacked`.
inline bool rows_independent(const Matrix& stacked) {
  if (stacked.rows() == 0) return true;
  if (stacked.rows() > stacked.cols()) return false;
  Eigen::JacobiSVD<Matrix> svd(stacked);
  const auto& sv = svd.singularValues();
  const double largest = sv(0);
  const double smallest = sv(sv.size() - 1);
  return largest > 0.0 && smallest > kIndependenceThreshold * largest;
}

}  // namespace detail

/// Kinetic-energy metric g as a callback over configurations.
struct MetricTensor {
  int dim = 0;
  std::function<Matrix(const Vector&)> eval;

  static MetricTensor constant(Matrix g) {
    const int n = static_cast<int>(g.rows());
    return MetricTensor{n, [g = std::move(g)](const Vector&) { return g; }};
  }
  static MetricTensor identity(int n) { return constant(Matrix::Identity(n, n)); }

  Matrix at(const Vector& q) const {
    detail::require_dim(q, dim, "metric configuration");
    Matrix g = eval(q);
    if (g.rows() != dim || g.cols() != dim) {
      throw DimensionError("metric callback returned a " + std::to_string(g.rows()) + "x" +
                           std::to_string(g.cols()) + " matrix for dim " + std::to_string(dim));
    }
    return g;
  }
};

/// Pointwise covector field, e.g. a constraint form or the differential dh.
struct OneForm {
  std::function<Covector(const Vector&)> eval;

  Covector operator()(const Vector& q) const { return eval(q); }
};

/// m constraint one-forms; the distribution is the intersection of their kernels.
struct ConstraintSet {
  int dim = 0;
  std::vector<OneForm> forms;

  int size() const { return static_cast<int>(forms.size()); }
  bool empty() const { return forms.empty(); }

  /// Stacked m x n matrix of the covectors at q (row k is omega^k).
  Matrix matrix(const Vector& q) const {
    detail::require_dim(q, dim, "constraint configuration");
    Matrix out(size(), dim);
    for (int k = 0; k < size(); ++k) {
      Covector w = forms[k](q);
      detail::require_dim(w, dim, "constraint one-form");
      out.row(k) = w.transpose();
    }
    return out;
  }

  bool independent_at(const Vector& q) const { return size() < dim && detail::rows_independent(matrix(q)); }
};

/// Dense factorization of g(q) with a condition-number guard. Building one is
/// the only place that touches the metric callback, so the operations below
/// share it.
class MetricFactor {
 public:
  MetricFactor(const MetricTensor& metric, const Vector& q) : g_(metric.at(q)) {
    if (!g_.isApprox(g_.transpose(), 1e-12)) {
      throw NumericError("metric is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g_, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kMaxMetricCondition) {
      throw NumericError("metric is singular or ill-conditioned (cond > 1e12)");
    }
    llt_.compute(g_);
  }

  const Matrix& g() const { return g_; }
  Eigen::Index dim() const { return g_.rows(); }

  Covector flat(const Vector& v) const { return g_ * v; }
  Vector sharp(const Covector& p) const { return llt_.solve(p); }
  Matrix sharp(const Matrix& rows_as_covectors) const {
    return llt_.solve(rows_as_covectors.transpose());
  }
  double cometric(const Covector& a, const Covector& b) const { return a.dot(sharp(b)); }

 private:
  Matrix g_;
  Eigen::LLT<Matrix> llt_;
};

/// v -> g(q) v.
inline Covector flat(const MetricTensor& metric, const Vector& q, const Vector& v) {
  detail::require_dim(v, metric.dim, "flat velocity");
  return metric.at(q) * v;
}

/// p -> g(q)^{-1} p.
inline Vector sharp(const MetricTensor& metric, const Vector& q, const Covector& p) {
  detail::require_dim(p, metric.dim, "sharp covector");
  return MetricFactor(metric, q).sharp(p);
}

/// Cometric pairing p1 . g^{-1} . p2.
inline double cometric_inner(const MetricTensor& metric, const Vector& q, const Covector& p1,
                             const Covector& p2) {
  detail::require_dim(p1, metric.dim, "cometric covector");
  detail::require_dim(p2, metric.dim, "cometric covector");
  return MetricFactor(metric, q).cometric(p1, p2);
}

inline double kinetic_energy(const MetricTensor& metric, const Vector& q, const Vector& v) {
  detail::require_dim(v, metric.dim, "kinetic energy velocity");
  return 0.5 * v.dot(metric.at(q) * v);
}

/// Gram matrix of the constraints in the cometric (upper indices) and its inverse.
struct GramMatrices {
  Matrix upper;
  Matrix lower;
};

inline GramMatrices gram_matrices(const MetricFactor& factor, const Matrix& omega) {
  if (omega.rows() == 0) return {Matrix(0, 0), Matrix(0, 0)};
  if (!detail::rows_independent(omega)) {
    throw DegeneracyError("constraint one-forms are linearly dependent");
  }
  GramMatrices out;
  out.upper = omega * factor.sharp(omega);
  out.upper = 0.5 * (out.upper + out.upper.transpose());
  Eigen::LDLT<Matrix> ldlt(out.upper);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw DegeneracyError("constraint Gram matrix is not positive definite");
  }
  out.lower = ldlt.solve(Matrix::Identity(omega.rows(), omega.rows()));
  return out;
}

inline GramMatrices gram_matrices(const ConstraintSet& constraints, const MetricTensor& metric,
                                  const Vector& q) {
  if (constraints.dim != metric.dim) throw DimensionError("constraint/metric dimension mismatch");
  return gram_matrices(MetricFactor(metric, q), constraints.matrix(q));
}

/// pi(v) = v - a_ij omega^i(v) W^j with W^j = (omega^j)^sharp.
inline Vector project_onto_distribution(const MetricFactor& factor, const Matrix& omega,
                                        const Vector& v) {
  if (omega.rows() == 0) return v;
  const GramMatrices gram = gram_matrices(factor, omega);
  const Matrix W = factor.sharp(omega);  // columns are W^j
  return v - W * (gram.lower * (omega * v));
}

inline Vector project_onto_distribution(const ConstraintSet& constraints, const MetricTensor& metric,
                                        const Vector& q, const Vector& v) {
  if (constraints.dim != metric.dim) throw DimensionError("constraint/metric dimension mismatch");
  detail::require_dim(v, metric.dim, "projected velocity");
  if (constraints.empty()) return v;
  return project_onto_distribution(MetricFactor(metric, q), constraints.matrix(q), v);
}

}  // namespace nhimpact
