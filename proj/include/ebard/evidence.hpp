#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "ebard/model.hpp"

namespace ebard {

// Log-evidence convention
// -----------------------
// Functions taking a WhitenedProblem return log(Z(lambda) / Z_inf), where
// Z_inf = lim_{lambda->inf} Z(lambda) = (2 pi)^{-n/2} exp(-||y||^2 / 2). The
// value tends to 0 as lambda grows. Functions taking a Dataset return the
// absolute log Z, i.e. the relative value plus Asymptote::log_z_inf.

enum class EvidenceBranch { Closed, MC, Oracle };

std::string_view to_string(EvidenceBranch branch);

struct EvidencePoint {
  double lambda;
  double log_z;
  EvidenceBranch branch;
  std::optional<double> std_error_log;  ///< set for Monte Carlo points
};

/// Large-lambda expansion Z(l) ~ Z_inf (1 + coeff * l^{-2/kappa}).
struct Asymptote {
  double log_z_inf;           ///< 0 when built from a WhitenedProblem
  double second_order_coeff;  ///< sigma_w^2 / 2 (||Phi^T y||^2 - ||Phi||_F^2)
  double kappa;
  double sigma_w_sq;

  /// log of the two-term expansion at lambda; NaN where it is not positive.
  double log_z(double lambda) const;
};

struct EvidenceCurve {
  std::vector<EvidencePoint> points;
  Asymptote asymptote;
};

// Closed forms. All throw DomainError for lambda <= 0 or non-finite lambda.

/// Gaussian-conjugate evidence: (m/2) log(l/(n+l)) + (||y~||^2/2) n/(n+l).
double log_z_ridge(const WhitenedProblem& problem, double lambda);
double d_log_z_ridge(const WhitenedProblem& problem, double lambda);

/// One coordinate of the lasso evidence, y_scalar = y~_j.
double log_z_lasso_1d(double y_scalar, double lambda, double n);
double d_log_z_lasso_1d(double y_scalar, double lambda, double n);

/// Sum of the coordinate-wise 1-D terms.
double log_z_lasso(const WhitenedProblem& problem, double lambda);
double d_log_z_lasso(const WhitenedProblem& problem, double lambda);

/// Group lasso evidence for m = 1 (the 1-D lasso) and m = 3
/// (Lambda^3/M * [(L+M) erfcx(L+M) - (L-M) erfcx(L-M)] up to normalization,
/// L = lambda/sqrt(2n), M = ||y~||/sqrt(2)). Other m throw UnsupportedError.
double log_z_group_lasso(const WhitenedProblem& problem, double lambda);
double d_log_z_group_lasso(const WhitenedProblem& problem, double lambda);

/// True when log_z_closed supports (spec, m).
bool has_closed_form(const RegularizerSpec& spec, Eigen::Index m);

/// Dispatch to the closed form; UnsupportedError when none exists.
double log_z_closed(const WhitenedProblem& problem, const RegularizerSpec& spec, double lambda);

/// Analytic derivative d/dlambda of the closed form, when one exists.
std::optional<double> d_log_z_closed(const WhitenedProblem& problem, const RegularizerSpec& spec,
                                     double lambda);

/// Closed form where available, otherwise box quadrature (m <= 3, labeled
/// Oracle). Larger m without a closed form throws UnsupportedError.
EvidencePoint log_z(const WhitenedProblem& problem, const RegularizerSpec& spec, double lambda);

Asymptote asymptote(const Dataset& data, const RegularizerSpec& spec);
Asymptote asymptote(const WhitenedProblem& problem, const RegularizerSpec& spec);

/// `points` log-spaced values from lo to hi inclusive (a single point gives {lo}).
std::vector<double> log_grid(double lo, double hi, std::size_t points);

/// Default grid: 61 log-spaced points on [1e-3, 1e3].
std::vector<double> default_grid();

/// Relative curve (see convention above) via log_z().
EvidenceCurve evidence_curve(const WhitenedProblem& problem, const RegularizerSpec& spec,
                             const std::vector<double>& grid);

/// Adds a constant to every log_z and to the asymptote anchor.
EvidenceCurve shift_curve(EvidenceCurve curve, double offset);

namespace detail {

/// Special-function backend used by the closed forms. Swappable so the
/// verification suite can run a deliberately broken variant as a negative control.
struct SpecialBackend {
  double (*erfcx)(double);
  double (*log_erfcx)(double);
};

const SpecialBackend& default_backend();
/// erfcx replaced by first-order approximations (negative control only).
const SpecialBackend& first_order_backend();

double log_z_lasso_1d(double y_scalar, double lambda, double n, const SpecialBackend& sf);
double log_z_group_lasso(const WhitenedProblem& problem, double lambda, const SpecialBackend& sf);

}  // namespace detail

}  // namespace ebard
