#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>

#include "ebard/model.hpp"

namespace ebard {

/// Brute-force ground truth for the closed forms: nested adaptive
/// Gauss-Kronrod quadrature of the defining integrals for m <= 3.

inline constexpr double kOracleTolerance = 1e-10;

struct QuadratureResult {
  double log_value;
  double abs_error_estimate;  ///< absolute error of log_value (= relative error of the integral)
  std::size_t subdivisions;   ///< intervals used on the outermost axis
};

/// Integral of a real function over the box [-radius, radius]^m (m <= 3).
/// Every axis is split at 0 and refined geometrically toward 0 down to
/// `min_scale`, so kinks and narrow peaks at the origin are resolved.
struct BoxIntegral {
  double value;
  double abs_error_estimate;
  std::size_t subdivisions;
};
BoxIntegral integrate_box(const std::function<double(std::span<const double>)>& f, Eigen::Index m,
                          double radius, double rel_tol, double min_scale = 1e-2);

/// log(Z(lambda)/Z_inf) by box quadrature over [-R, R]^m, R = ||y~|| + 12,
/// in the scaled coordinates u = sqrt(n) w. Works for every regularizer kind
/// (custom ones via their h and a quadrature normalizer). Throws
/// UnsupportedError for m > 3 and ConvergenceError when `tol` is not reached.
QuadratureResult quad_log_z(const WhitenedProblem& problem, const RegularizerSpec& spec,
                            double lambda, double tol = kOracleTolerance);

/// d/dlambda log Z = m/(kappa lambda) - E_post[h(w)], posterior mean by quadrature.
double quad_d_log_z(const WhitenedProblem& problem, const RegularizerSpec& spec, double lambda,
                    double tol = kOracleTolerance);

/// Group lasso with m = 3 in spherical coordinates about y~: a 2-D (radius,
/// cos angle) quadrature, independent of the box oracle and of the closed form.
QuadratureResult quad_log_z_polar(const WhitenedProblem& problem, double lambda,
                                  double tol = kOracleTolerance);
double quad_d_log_z_polar(const WhitenedProblem& problem, double lambda,
                          double tol = kOracleTolerance);

/// log of the lambda = 1 normalizer, log of the integral of exp(-h(w)).
/// Analytic for built-ins, quadrature for custom regularizers.
double log_prior_normalizer(const RegularizerSpec& spec, Eigen::Index m,
                            double tol = kOracleTolerance);

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// First and second moments of p0(w) ~ exp(-h(w)) by quadrature (m <= 3).
Moments quad_moments(const RegularizerSpec& spec, Eigen::Index m, double tol = kOracleTolerance);

/// Reference maximizer of the evidence: bisection on the sign of the
/// quadrature derivative in log lambda until the bracket is narrower than
/// `tol` (relative). Uses the polar oracle for group lasso with m = 3.
/// Throws PreconditionError if no interior maximum is found below 1e8.
double argmax_lambda_oracle(const WhitenedProblem& problem, const RegularizerSpec& spec,
                            double tol = kOracleTolerance);

/// Exact ridge evidence for an arbitrary design: y ~ N(0, I + Phi Phi^T / lambda).
/// Absolute log Z.
double ridge_log_z_exact(const Dataset& data, double lambda);

}  // namespace ebard
