#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

#include "ebard/model.hpp"

namespace ebard {

/// Relative tolerance of the whitening condition: max |Phi^T Phi - n I| <= 1e-9 n.
inline constexpr double kWhiteningTolerance = 1e-9;

struct WhiteningCheck {
  bool whitened;
  double gram_residual;  ///< max_ij |[Phi^T Phi - n I]_ij|
};

/// Tests Phi^T Phi = n I (n = row count) to an absolute tolerance.
WhiteningCheck check_whitened(const Eigen::MatrixXd& design, double tolerance);

struct WhiteningReport {
  Eigen::MatrixXd transformed_design;  ///< design * transform
  Eigen::MatrixXd transform;           ///< m x m, invertible
  double gram_residual;
};

/// Column-space orthogonalization scaled so the transformed Gram matrix is n I.
/// Weights fitted on the transformed design map back as w = transform * w'.
/// Throws SingularityError (with the numerical rank) for rank-deficient designs
/// and PreconditionError when n < m.
WhiteningReport whiten(const Eigen::MatrixXd& design);

/// Same data with the design replaced by its whitened version.
Dataset whiten_dataset(const Dataset& data, WhiteningReport* report = nullptr);

/// Gram scale c of an isotropic design (Phi^T Phi = c I), if there is one.
/// A design satisfying the whitening condition reports c = n.
std::optional<double> isotropic_gram_scale(const Eigen::MatrixXd& design);

/// y_tilde = Phi^T y / sqrt(c) for an isotropic design Phi^T Phi = c I (c = n for
/// whitened designs). Throws PreconditionError when the design is not isotropic.
WhitenedProblem reduce(const Dataset& data);

/// One whitened subproblem per group: the matching slice of y_tilde with the
/// same Gram scale.
std::vector<std::pair<std::vector<Eigen::Index>, WhitenedProblem>> decompose_by_groups(
    const Dataset& data, const GroupStructure& groups);

/// Slicing step of decompose_by_groups for an already reduced problem.
std::vector<std::pair<std::vector<Eigen::Index>, WhitenedProblem>> decompose_by_groups(
    const WhitenedProblem& problem, const GroupStructure& groups);

}  // namespace ebard
