#include "ebard/verify.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "ebard/errors.hpp"
#include "ebard/evidence.hpp"
#include "ebard/model.hpp"
#include "ebard/oracle.hpp"

namespace ebard {
namespace {

struct Suite {
  std::string name;
  std::vector<CheckResult>& out;

  void add(const std::string& check, double measured, double threshold) {
    out.push_back({name, check, measured <= threshold, measured, threshold});
  }
};

WhitenedProblem random_problem(Rng& rng, Eigen::Index m, double scale, double n) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd y(m);
  for (Eigen::Index j = 0; j < m; ++j) y(j) = scale * normal(rng);
  return WhitenedProblem(std::move(y), n);
}

void oracle_equivalence(const VerifyOptions& opt, const detail::SpecialBackend& sf, Rng& rng,
                        std::vector<CheckResult>& out) {
  Suite suite{"oracle-equivalence", out};
  const auto grid = log_grid(1e-3, 1e3, opt.quick ? 7 : 25);
  const auto lasso = RegularizerSpec::lasso();
  const auto group = RegularizerSpec::group_lasso();
  const auto ridge = RegularizerSpec::ridge();

  double worst = 0.0;
  for (double y : {-3.0, -0.5, 0.8, 2.0, 5.0}) {
    for (double n : {1.0, 3.0}) {
      const WhitenedProblem p(Eigen::VectorXd::Constant(1, y), n);
      for (double lambda : grid) {
        worst = std::max(worst, std::abs(detail::log_z_lasso_1d(y, lambda, n, sf) -
                                         quad_log_z(p, lasso, lambda).log_value));
      }
    }
  }
  suite.add("lasso-1d-closed-vs-quadrature", worst, 1e-7);

  worst = 0.0;
  const int problems = opt.quick ? 2 : 6;
  for (int i = 0; i < problems; ++i) {
    const WhitenedProblem p = random_problem(rng, 3, 1.5, i % 2 ? 1.0 : 2.5);
    for (double lambda : grid) {
      worst = std::max(worst, std::abs(detail::log_z_group_lasso(p, lambda, sf) -
                                       quad_log_z_polar(p, lambda).log_value));
    }
  }
  suite.add("group-lasso-m3-closed-vs-polar", worst, 1e-7);

  if (!opt.quick) {
    Eigen::VectorXd y(3);
    y << 2.0, 0.0, 0.0;
    const WhitenedProblem p(y, 1.0);
    worst = 0.0;
    for (double lambda : {0.1, 1.0, 10.0}) {
      worst = std::max(worst, std::abs(quad_log_z(p, group, lambda, 1e-9).log_value -
                                       quad_log_z_polar(p, lambda).log_value));
    }
    suite.add("group-lasso-m3-box-vs-polar", worst, 1e-7);
  }

  worst = 0.0;
  for (int i = 0; i < (opt.quick ? 1 : 3); ++i) {
    const WhitenedProblem p = random_problem(rng, 2, 1.5, 2.0);
    for (double lambda : log_grid(1e-2, 1e2, opt.quick ? 3 : 7)) {
      worst = std::max(worst, std::abs(log_z_ridge(p, lambda) -
                                       quad_log_z(p, ridge, lambda, 1e-9).log_value));
    }
  }
  suite.add("ridge-m2-closed-vs-quadrature", worst, 1e-7);

  Eigen::VectorXd y2(2);
  y2 << 1.7, -0.4;
  const WhitenedProblem p2(y2, 1.5);
  worst = 0.0;
  for (double lambda : {0.05, 1.0, 20.0}) {
    const double joint = quad_log_z(p2, lasso, lambda, 1e-10).log_value;
    double split = 0.0;
    for (int j = 0; j < 2; ++j) {
      split += quad_log_z(WhitenedProblem(y2.segment(j, 1), 1.5), lasso, lambda).log_value;
    }
    worst = std::max(worst, std::abs(joint - split));
  }
  suite.add("lasso-m2-separability", worst, 1e-8);
}

void moments(const VerifyOptions& opt, std::vector<CheckResult>& out) {
  Suite suite{"moments", out};
  for (auto kind : {RegularizerKind::Ridge, RegularizerKind::Lasso, RegularizerKind::GroupLasso}) {
    const auto spec = RegularizerSpec::builtin(kind);
    for (Eigen::Index m = 1; m <= (opt.quick ? 2 : 3); ++m) {
      const Moments mo = quad_moments(spec, m, 1e-10);
      const double sigma = builtin_sigma_w_sq(kind, m);
      const std::string tag = std::string(to_string(kind)) + "-m" + std::to_string(m);
      suite.add(tag + "-mean", mo.mean.cwiseAbs().maxCoeff(), 1e-8);
      const Eigen::MatrixXd target = sigma * Eigen::MatrixXd::Identity(m, m);
      suite.add(tag + "-covariance", (mo.cov - target).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

// Residual of Z/Z_inf beyond the second-order term, scaled by lambda^{3/kappa};
// the value at 1e2 must bound the values at 1e3 and 1e4.
void asymptotes(std::vector<CheckResult>& out) {
  Suite suite{"asymptote", out};
  Eigen::VectorXd y(3);
  y << 1.9, -0.8, 0.6;
  const WhitenedProblem p(y, 2.0);
  for (auto kind : {RegularizerKind::Ridge, RegularizerKind::Lasso, RegularizerKind::GroupLasso}) {
    const auto spec = RegularizerSpec::builtin(kind);
    const Asymptote a = asymptote(p, spec);
    auto scaled_residual = [&](double lambda) {
      const double z = std::expm1(log_z_closed(p, spec, lambda));
      const double second = a.second_order_coeff * std::pow(lambda, -2.0 / a.kappa);
      return std::abs(z - second) * std::pow(lambda, 3.0 / a.kappa);
    };
    const double c = scaled_residual(1e2);
    const double worst = std::max(scaled_residual(1e3), scaled_residual(1e4));
    suite.add(std::string(to_string(kind)) + "-third-order-residual", worst, c);
  }
}

void quasiconcavity(const VerifyOptions& opt, Rng& rng, std::vector<CheckResult>& out) {
  Suite suite{"quasiconcavity", out};
  const auto grid = default_grid();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int worst_changes = 0;
  int gate_mismatch = 0;
  const int per_model = opt.quick ? 5 : 20;
  for (auto kind : {RegularizerKind::Ridge, RegularizerKind::Lasso, RegularizerKind::GroupLasso}) {
    const auto spec = RegularizerSpec::builtin(kind);
    for (int i = 0; i < per_model; ++i) {
      Eigen::Index m = 1 + static_cast<Eigen::Index>(unit(rng) * 4.0);
      if (kind == RegularizerKind::GroupLasso) m = i % 2 ? 1 : 3;
      const double n = 1.0 + std::floor(unit(rng) * 20.0);
      const WhitenedProblem p = random_problem(rng, m, 0.5 + 1.5 * unit(rng), n);
      std::vector<double> values;
      for (double lambda : grid) values.push_back(log_z_closed(p, spec, lambda));
      const int changes = slope_sign_changes(values);
      worst_changes = std::max(worst_changes, changes);
      const bool divergent = p.y_tilde_norm_sq() <= static_cast<double>(m);
      const bool monotone = changes == 0;
      if (divergent != monotone) ++gate_mismatch;
    }
  }
  suite.add("max-slope-sign-changes", worst_changes, 1.0);
  suite.add("gate-shape-mismatches", gate_mismatch, 0.0);
}

}  // namespace

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string VerifyReport::to_json() const {
  nlohmann::ordered_json j;
  j["passed"] = passed();
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    j["checks"].push_back({{"suite", c.suite},
                           {"name", c.name},
                           {"passed", c.passed},
                           {"measured", c.measured},
                           {"threshold", c.threshold}});
  }
  return j.dump(2);
}

int slope_sign_changes(const std::vector<double>& values, double flat) {
  int changes = 0;
  int last = 0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    const double d = values[i + 1] - values[i];
    if (std::abs(d) <= flat * (1.0 + std::abs(values[i]))) continue;
    const int s = d > 0 ? 1 : -1;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

VerifyReport run_verification(const VerifyOptions& options) {
  const detail::SpecialBackend* sf = &detail::default_backend();
  if (options.inject_fault == "erfcx-first-order") {
    sf = &detail::first_order_backend();
  } else if (!options.inject_fault.empty()) {
    throw DomainError("unknown fault '" + options.inject_fault + "' (known: erfcx-first-order)");
  }
  Rng rng(options.seed);
  VerifyReport report;
  oracle_equivalence(options, *sf, rng, report.checks);
  moments(options, report.checks);
  asymptotes(report.checks);
  quasiconcavity(options, rng, report.checks);
  return report;
}

}  // namespace ebard
