#pragma once

#include <stdexcept>
#include <string>

namespace nhimpact {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector/matrix sizes do not match the configuration space dimension.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Singular or ill-conditioned metric.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Constraint one-forms (possibly together with dh) are linearly dependent,
/// or the impact chart has a vanishing differential.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented precondition (e.g. pre-impact velocity not in
/// the constraint distribution).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The impact map produced a velocity that keeps leaving the feasible region.
class NonPhysicalImpactError : public Error {
 public:
  using Error::Error;
};

/// Hybrid state outside the feasible region, or an ambiguous event.
class InvalidStateError : public Error {
 public:
  using Error::Error;
};

/// Bad scenario configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace nhimpact
