#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace ebard {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of an operation
/// (non-finite input, non-positive lambda, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or invalid dataset file.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition does not hold (e.g. design not whitened).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Invalid group partition.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// The design matrix is numerically rank deficient.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, long rank) : Error(what), rank_(rank) {}
  long rank() const noexcept { return rank_; }

 private:
  long rank_;
};

/// The requested model/engine combination has no implementation
/// (e.g. a closed form for group lasso with m = 2).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature did not reach its tolerance within the budget.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double achieved_log_value, double error_estimate)
      : Error(what), achieved_(achieved_log_value), error_(error_estimate) {}
  double achieved_log_value() const noexcept { return achieved_; }
  double error_estimate() const noexcept { return error_; }

 private:
  double achieved_;
  double error_;
};

/// A scalar search observed evidence values that are not unimodal.
/// Carries the offending (lambda, log Z) triple.
class QuasiconcavityViolation : public Error {
 public:
  QuasiconcavityViolation(const std::string& what, std::array<double, 3> lambdas,
                          std::array<double, 3> log_z)
      : Error(what), lambdas_(lambdas), log_z_(log_z) {}
  const std::array<double, 3>& lambdas() const noexcept { return lambdas_; }
  const std::array<double, 3>& log_z() const noexcept { return log_z_; }

 private:
  std::array<double, 3> lambdas_;
  std::array<double, 3> log_z_;
};

}  // namespace ebard
