#include "ebard/reduction.hpp"

#include <cmath>

#include "ebard/errors.hpp"

namespace ebard {

WhiteningCheck check_whitened(const Eigen::MatrixXd& design, double tolerance) {
  const double n = static_cast<double>(design.rows());
  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::MatrixXd target = n * Eigen::MatrixXd::Identity(design.cols(), design.cols());
  const double residual = (gram - target).cwiseAbs().maxCoeff();
  return {residual <= tolerance, residual};
}

WhiteningReport whiten(const Eigen::MatrixXd& design) {
  const Eigen::Index n = design.rows();
  const Eigen::Index m = design.cols();
  if (n < m) {
    throw PreconditionError("whitening needs at least as many rows as columns (n = " +
                            std::to_string(n) + ", m = " + std::to_string(m) + ")");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted(design);
  if (pivoted.rank() < m) {
    throw SingularityError("design is rank deficient: numerical rank " +
                           std::to_string(pivoted.rank()) + " < " + std::to_string(m),
                           pivoted.rank());
  }

  // Phi = Q R  =>  Phi * (sqrt(n) R^{-1}) = sqrt(n) Q has Gram n I.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
  Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  // positive diagonal, so the whitened columns keep the orientation of the originals
  for (Eigen::Index i = 0; i < m; ++i) {
    if (r(i, i) < 0.0) r.row(i) *= -1.0;
  }
  Eigen::MatrixXd transform = std::sqrt(static_cast<double>(n)) *
                              r.triangularView<Eigen::Upper>().solve(
                                  Eigen::MatrixXd::Identity(m, m));

  WhiteningReport report;
  report.transformed_design = design * transform;
  report.transform = std::move(transform);
  report.gram_residual = check_whitened(report.transformed_design, 0.0).gram_residual;
  return report;
}

Dataset whiten_dataset(const Dataset& data, WhiteningReport* report) {
  WhiteningReport local = whiten(data.design());
  Dataset out(local.transformed_design, data.response());
  if (report) *report = std::move(local);
  return out;
}

std::optional<double> isotropic_gram_scale(const Eigen::MatrixXd& design) {
  const double n = static_cast<double>(design.rows());
  const Eigen::MatrixXd gram = design.transpose() * design;
  if (check_whitened(design, kWhiteningTolerance * n).whitened) return n;
  const double c = gram.diagonal().mean();
  if (!(c > 0.0)) return std::nullopt;
  const Eigen::MatrixXd target = c * Eigen::MatrixXd::Identity(design.cols(), design.cols());
  if ((gram - target).cwiseAbs().maxCoeff() <= kWhiteningTolerance * c) return c;
  return std::nullopt;
}

WhitenedProblem reduce(const Dataset& data) {
  const auto scale = isotropic_gram_scale(data.design());
  if (!scale) {
    const auto check = check_whitened(data.design(), kWhiteningTolerance * data.n());
    throw PreconditionError("design does not satisfy Phi^T Phi = n I (gram residual " +
                            std::to_string(check.gram_residual) + "); call whiten first");
  }
  Eigen::VectorXd y_tilde = data.design().transpose() * data.response() / std::sqrt(*scale);
  return WhitenedProblem(std::move(y_tilde), *scale);
}

std::vector<std::pair<std::vector<Eigen::Index>, WhitenedProblem>> decompose_by_groups(
    const WhitenedProblem& problem, const GroupStructure& groups) {
  if (groups.m() != problem.m()) {
    throw StructureError("group structure covers " + std::to_string(groups.m()) +
                         " features but the problem has " + std::to_string(problem.m()));
  }
  std::vector<std::pair<std::vector<Eigen::Index>, WhitenedProblem>> out;
  out.reserve(groups.size());
  for (const auto& g : groups.groups()) {
    Eigen::VectorXd slice(static_cast<Eigen::Index>(g.size()));
    for (std::size_t k = 0; k < g.size(); ++k) slice(static_cast<Eigen::Index>(k)) = problem.y_tilde()(g[k]);
    out.emplace_back(g, WhitenedProblem(std::move(slice), problem.n()));
  }
  return out;
}

std::vector<std::pair<std::vector<Eigen::Index>, WhitenedProblem>> decompose_by_groups(
    const Dataset& data, const GroupStructure& groups) {
  return decompose_by_groups(reduce(data), groups);
}

}  // namespace ebard
