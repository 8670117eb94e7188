#pragma once

#include <stdexcept>
#include <string>

namespace phri {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatches and invalid geometry/feature/config parameters.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Argument outside a function's mathematical domain (e.g. beta <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A correction placed at an endpoint or outside the trajectory.
class CorrectionPlacementError : public Error {
 public:
  using Error::Error;
};

/// Distribution fitting failed (degenerate or too few samples).
class FitError : public Error {
 public:
  using Error::Error;
};

/// Calibration produced too few converged samples for some cell.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Numerical routine failed to make progress.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace phri
