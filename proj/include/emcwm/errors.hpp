#pragma once

#include <stdexcept>
#include <string>

namespace emcwm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of matrices or vectors do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented precondition or type invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Eigen-decomposition or Cholesky factorization of a matrix that is not
/// symmetric positive definite.
class DecompositionError : public Error {
 public:
  using Error::Error;
};

/// A constrained covariance estimate is singular or numerically indefinite.
class DegenerateCovariance : public Error {
 public:
  using Error::Error;
};

/// The weighted normal-equations matrix of a regression is singular.
class RankDeficiency : public Error {
 public:
  using Error::Error;
};

/// No pilot run produced usable starting labels.
class InitializationError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (CSV, JSON parameters, label files).
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace emcwm
