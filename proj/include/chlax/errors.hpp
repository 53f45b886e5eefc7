#pragma once

#include <stdexcept>
#include <string>

namespace chlax {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Two operands live on different grids.
struct GridMismatchError : Error {
  using Error::Error;
};

/// A precondition-level validation failed (bad argument, bad profile, ...).
struct ValidationError : Error {
  using Error::Error;
};

/// An operation that requires a symmetric kernel received an asymmetric one.
struct AsymmetryError : Error {
  using Error::Error;
};

/// A truncated series hit its cap before reaching the requested tolerance.
struct ConvergenceError : Error {
  using Error::Error;
};

/// A linear system or determinant is numerically singular.
struct SingularError : Error {
  using Error::Error;
};

/// I + S failed the positive-definiteness requirement.
struct NotPositiveDefiniteError : Error {
  double smallest_eigenvalue = 0.0;
  NotPositiveDefiniteError(const std::string& msg, double lambda_min)
      : Error(msg), smallest_eigenvalue(lambda_min) {}
};

/// A computation would exceed the representable conditioning budget.
struct ConditioningError : Error {
  using Error::Error;
};

/// An explicit time stepper was asked to run outside its stability gate.
struct StabilityError : Error {
  using Error::Error;
};

/// A quantity that must stay positive or monotone ceased to be so.
struct MonotonicityError : Error {
  using Error::Error;
};

}  // namespace chlax
