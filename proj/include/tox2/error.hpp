#pragma once

#include <stdexcept>
#include <string>

namespace tox2 {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration, schema violation or bad user input.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The requested correlation cannot be realised with nonnegative cell counts.
class InfeasibleCorrelation : public Error {
 public:
  InfeasibleCorrelation(double rho, double lo, double hi);
  double rho() const noexcept { return rho_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }

 private:
  double rho_;
  double lo_;
  double hi_;
};

/// A gamma-function argument in a mixture weight is not positive.
class DegeneratePrior : public Error {
 public:
  using Error::Error;
};

/// Density requested for an alpha vector with a zero cell.
class UnsupportedDegenerateDensity : public DomainError {
 public:
  using DomainError::DomainError;
};

class StateError : public Error {
 public:
  using Error::Error;
};

/// Problem size exceeds a tractability cap.
class ResourceLimit : public Error {
 public:
  using Error::Error;
};

class InfeasibleCalibration : public Error {
 public:
  InfeasibleCalibration(double target, double tau_max, double alpha_at_max);
  double alpha_at_max() const noexcept { return alpha_at_max_; }
  double tau_max() const noexcept { return tau_max_; }

 private:
  double tau_max_;
  double alpha_at_max_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tox2
