#pragma once

#include <stdexcept>
#include <string>

namespace heatmpc {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: malformed mesh request, config schema violation, bad expression.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Mismatched vector/matrix sizes between arguments.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A sparse or dense linear solve failed; `step` is the time index (-1 when not applicable).
class SolverError : public Error {
 public:
  SolverError(const std::string& what, int step = -1)
      : Error(step >= 0 ? what + " (time step " + std::to_string(step) + ")" : what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace heatmpc
