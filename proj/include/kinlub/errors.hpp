#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kinlub {

/// Base class for every error raised by the library. The CLI maps the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Right-hand side violates a solvability (compatibility) condition.
class SolvabilityError : public Error {
 public:
  SolvabilityError(const std::string& what, double defect)
      : Error(what), defect_(defect) {}
  double defect() const noexcept { return defect_; }

 private:
  double defect_;
};

/// An iterative solver hit its cap. Carries the residual history.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// The Picard iteration for the remainder stopped contracting.
class DivergenceError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

/// A structural property the construction relies on failed (e.g. A <= 0).
class ModelViolation : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class InvalidDomain : public Error {
 public:
  using Error::Error;
};

}  // namespace kinlub
