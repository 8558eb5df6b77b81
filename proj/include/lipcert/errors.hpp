#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lipcert {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad documents, shape mismatches, out-of-range parameters.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A requested problem is larger than the configured limits allow.
class SizeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Numerical failure inside an algorithm (non-convergence, lost definiteness).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
 public:
  explicit NotPositiveDefinite(std::size_t pivot)
      : NumericalError("matrix is not positive definite (pivot " +
                       std::to_string(pivot) + ")"),
        pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double last_value, double residual)
      : NumericalError(what + " (last value " + std::to_string(last_value) +
                       ", residual " + std::to_string(residual) + ")"),
        last_value_(last_value),
        residual_(residual) {}

  double last_value() const noexcept { return last_value_; }
  double residual() const noexcept { return residual_; }

 private:
  double last_value_;
  double residual_;
};

}  // namespace lipcert
