#include "ebard/estimator.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ebard/errors.hpp"
#include "ebard/evidence.hpp"
#include "ebard/oracle.hpp"
#include "ebard/reduction.hpp"

namespace ebard {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Golden-section on values cannot resolve the maximizer much below sqrt(eps).
constexpr double kValueSearchFloor = 1e-6;
constexpr double kDoublingLimit = 1e15;

enum class Mode { Analytic, Quadrature, Values };

struct Search {
  const WhitenedProblem& problem;
  const RegularizerSpec& spec;
  const EstimateOptions& options;
  Mode mode;
  std::size_t evaluations = 0;

  Search(const WhitenedProblem& p, const RegularizerSpec& s, const EstimateOptions& o)
      : problem(p), spec(s), options(o) {
    if (has_closed_form(spec, problem.m())) {
      mode = Mode::Analytic;
    } else if (problem.m() <= 3) {
      mode = Mode::Quadrature;
    } else {
      mode = Mode::Values;
    }
  }

  double value(double lambda) {
    ++evaluations;
    switch (mode) {
      case Mode::Analytic:
        return log_z_closed(problem, spec, lambda);
      case Mode::Quadrature:
        return quad_log_z(problem, spec, lambda).log_value;
      case Mode::Values:
        break;
    }
    return mc_log_z(problem, spec, lambda, options.mc).log_z;
  }

  double slope(double lambda) {
    switch (mode) {
      case Mode::Analytic:
        ++evaluations;
        return *d_log_z_closed(problem, spec, lambda);
      case Mode::Quadrature:
        ++evaluations;
        return quad_d_log_z(problem, spec, lambda);
      case Mode::Values:
        break;
    }
    // central difference in log lambda; common random numbers keep it smooth
    const double h = 1e-4;
    return (value(lambda * std::exp(h)) - value(lambda * std::exp(-h))) / (2.0 * h * lambda);
  }
};

bool gate_divergent(const WhitenedProblem& problem) {
  return problem.y_tilde_norm_sq() <= static_cast<double>(problem.m());
}

double upper_bound(Search& s) {
  const WhitenedProblem& p = s.problem;
  if (gate_divergent(p)) {
    throw PreconditionError("bracket_upper: divergent branch (||y~||^2 <= m), no finite maximizer");
  }
  const double m = static_cast<double>(p.m());
  const double excess = p.y_tilde_norm_sq() - m;
  switch (s.spec.kind()) {
    case RegularizerKind::Ridge:
      return m * p.n() / excess;
    case RegularizerKind::Lasso:
      if (p.m() == 1) return std::sqrt(4.0 * p.n() / excess);
      break;
    case RegularizerKind::GroupLasso:
      if (p.m() == 1 || p.m() == 3) return std::sqrt((m + 3.0) * m * p.n() / excess);
      break;
    case RegularizerKind::Custom:
      break;
  }
  double lambda = std::sqrt(p.n());
  while (s.slope(lambda) > 0.0) {
    lambda *= 2.0;
    if (lambda > kDoublingLimit) {
      throw ConvergenceError("bracket_upper: evidence still increasing at lambda = 1e15", kInf, kInf);
    }
  }
  return lambda;
}

// Golden-section on log lambda over [lo, hi], checking that every evaluated
// triple is consistent with a quasiconcave function.
double golden(Search& s, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(lo);
  double b = std::log(hi);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fa = s.value(std::exp(a));
  double fb = s.value(std::exp(b));
  double fc = s.value(std::exp(c));
  double fd = s.value(std::exp(d));
  auto check = [](double x1, double f1, double x2, double f2, double x3, double f3) {
    const double slack = 1e-12 * (1.0 + std::abs(f2));
    if (f2 < std::min(f1, f3) - slack) {
      throw QuasiconcavityViolation("evidence is not quasiconcave along the search",
                                    {std::exp(x1), std::exp(x2), std::exp(x3)}, {f1, f2, f3});
    }
  };
  while (b - a > tol) {
    check(a, fa, c, fc, d, fd);
    check(c, fc, d, fd, b, fb);
    if (fc >= fd) {
      b = d;
      fb = fd;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = s.value(std::exp(c));
    } else {
      a = c;
      fa = fc;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = s.value(std::exp(d));
    }
  }
  return std::exp(0.5 * (a + b));
}

LambdaEstimate divergent_estimate(const ArdVerdict& verdict) {
  return {verdict, Divergent{}, {kInf, kInf}, 0.0, 0, std::nullopt, std::nullopt};
}

LambdaEstimate search(const WhitenedProblem& problem, const RegularizerSpec& spec,
                      const EstimateOptions& options, const ArdVerdict& verdict) {
  if (verdict.divergent || gate_divergent(problem)) return divergent_estimate(verdict);
  if (!(options.tolerance > 0.0)) throw DomainError("estimate_lambda: tolerance must be positive");

  Search s(problem, spec, options);
  double hi = upper_bound(s);
  if (spec.kind() == RegularizerKind::Ridge) hi *= 2.0;  // the bound is the maximizer itself

  double lambda_star;
  double lo;
  if (s.mode == Mode::Values) {
    lo = hi / 2.0;
    while (s.slope(lo) <= 0.0) {
      hi = lo;
      lo /= 2.0;
      if (lo < 1e-300) throw ConvergenceError("estimate_lambda: no increasing region", kInf, kInf);
    }
    const double tol = std::max(options.tolerance, kValueSearchFloor);
    lambda_star = golden(s, lo, hi, tol);
    lo = lambda_star * std::exp(-tol);
    hi = lambda_star * std::exp(tol);
  } else {
    while (s.slope(hi) > 0.0) {
      hi *= 2.0;
      if (hi > kDoublingLimit) throw ConvergenceError("estimate_lambda: evidence still increasing", kInf, kInf);
    }
    lo = hi / 2.0;
    while (s.slope(lo) <= 0.0) {
      hi = lo;
      lo /= 2.0;
      if (lo < 1e-300) throw ConvergenceError("estimate_lambda: no increasing region", kInf, kInf);
    }
    while (std::log(hi / lo) > options.tolerance) {
      const double mid = std::sqrt(lo * hi);
      if (s.slope(mid) > 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    lambda_star = std::sqrt(lo * hi);
  }
  const double log_z_star = s.value(lambda_star);
  return {verdict, Finite{lambda_star}, {lo, hi}, log_z_star, s.evaluations, std::nullopt,
          std::nullopt};
}

double log_z_inf(const Dataset& data) {
  return -0.5 * data.response().squaredNorm() -
         0.5 * static_cast<double>(data.n()) * std::log(2.0 * std::numbers::pi);
}

nlohmann::ordered_json number_or_infinity(double x) {
  if (std::isinf(x) && x > 0) return "infinity";
  return x;
}

nlohmann::ordered_json verdict_json(const ArdVerdict& v) {
  return {{"lhs", v.lhs}, {"rhs", v.rhs}, {"divergent", v.divergent}};
}

}  // namespace

double LambdaEstimate::lambda() const noexcept {
  if (const auto* f = std::get_if<Finite>(&value)) return f->lambda_star;
  return kInf;
}

ArdVerdict ard_gate(const Dataset& data) {
  const double lhs = (data.design().transpose() * data.response()).norm();
  const double rhs = data.design().norm();
  return {lhs, rhs, lhs <= rhs};
}

ArdVerdict ard_gate(const WhitenedProblem& problem) {
  const double root_n = std::sqrt(problem.n());
  return {root_n * std::sqrt(problem.y_tilde_norm_sq()),
          root_n * std::sqrt(static_cast<double>(problem.m())), gate_divergent(problem)};
}

double bracket_upper(const RegularizerSpec& spec, const WhitenedProblem& problem,
                     const EstimateOptions& options) {
  Search s(problem, spec, options);
  return upper_bound(s);
}

LambdaEstimate estimate_lambda(const WhitenedProblem& problem, const RegularizerSpec& spec,
                               const EstimateOptions& options) {
  return search(problem, spec, options, ard_gate(problem));
}

LambdaEstimate estimate_lambda(const Dataset& data, const RegularizerSpec& spec,
                               const EstimateOptions& options) {
  LambdaEstimate est;
  if (isotropic_gram_scale(data.design())) {
    est = search(reduce(data), spec, options, ard_gate(data));
  } else {
    WhiteningReport report;
    const Dataset whitened = whiten_dataset(data, &report);
    est = search(reduce(whitened), spec, options, ard_gate(whitened));
    est.transform = std::move(report.transform);
    est.raw_verdict = ard_gate(data);
  }
  est.log_z_at_star += log_z_inf(data);
  return est;
}

Eigen::VectorXd map_weights(const WhitenedProblem& problem, const RegularizerSpec& spec,
                            double lambda) {
  if (std::isnan(lambda) || lambda < 0.0) {
    throw DomainError("map_weights: lambda must be nonnegative (or +infinity)");
  }
  const Eigen::Index m = problem.m();
  if (std::isinf(lambda)) return Eigen::VectorXd::Zero(m);
  const double n = problem.n();
  const Eigen::VectorXd ols = problem.y_tilde() / std::sqrt(n);
  switch (spec.kind()) {
    case RegularizerKind::Ridge:
      return (n / (n + lambda)) * ols;
    case RegularizerKind::Lasso: {
      const double t = lambda / n;
      Eigen::VectorXd w(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        const double x = ols(j);
        w(j) = std::copysign(std::max(0.0, std::abs(x) - t), x);
      }
      return w;
    }
    case RegularizerKind::GroupLasso: {
      const double norm = std::sqrt(problem.y_tilde_norm_sq());
      if (norm == 0.0) return Eigen::VectorXd::Zero(m);
      return std::max(0.0, 1.0 - lambda / (std::sqrt(n) * norm)) * ols;
    }
    case RegularizerKind::Custom:
      break;
  }
  throw UnsupportedError("map_weights: no closed-form MAP solution for custom regularizers");
}

double subgradient_residual(const WhitenedProblem& problem, const RegularizerSpec& spec,
                            double lambda, const Eigen::VectorXd& w) {
  if (w.size() != problem.m()) throw DomainError("subgradient_residual: dimension mismatch");
  const double n = problem.n();
  // gradient of the quadratic: Phi^T Phi w - Phi^T y = n w - sqrt(n) y~
  const Eigen::VectorXd g = n * w - std::sqrt(n) * problem.y_tilde();
  if (std::isinf(lambda)) return w.cwiseAbs().maxCoeff();
  switch (spec.kind()) {
    case RegularizerKind::Ridge:
      return (g + lambda * w).cwiseAbs().maxCoeff();
    case RegularizerKind::Lasso: {
      double r = 0.0;
      for (Eigen::Index j = 0; j < w.size(); ++j) {
        if (w(j) != 0.0) {
          r = std::max(r, std::abs(g(j) + lambda * std::copysign(1.0, w(j))));
        } else {
          r = std::max(r, std::max(0.0, std::abs(g(j)) - lambda));
        }
      }
      return r;
    }
    case RegularizerKind::GroupLasso: {
      const double norm = w.norm();
      if (norm > 0.0) return (g + lambda * w / norm).norm();
      return std::max(0.0, g.norm() - lambda);
    }
    case RegularizerKind::Custom:
      break;
  }
  throw UnsupportedError("subgradient_residual: custom regularizers are not supported");
}

std::string verdict_to_json(const ArdVerdict& verdict) { return verdict_json(verdict).dump(); }

std::string estimate_to_json(const LambdaEstimate& estimate, const Eigen::VectorXd& weights) {
  nlohmann::ordered_json j;
  j["verdict"] = verdict_json(estimate.verdict);
  j["lambda"] = number_or_infinity(estimate.lambda());
  j["bracket"] = {number_or_infinity(estimate.bracket.first),
                  number_or_infinity(estimate.bracket.second)};
  j["log_z_at_star"] = estimate.log_z_at_star;
  j["map_weights"] = std::vector<double>(weights.data(), weights.data() + weights.size());
  j["iterations"] = estimate.iterations;
  if (estimate.raw_verdict) j["raw_verdict"] = verdict_json(*estimate.raw_verdict);
  if (estimate.transform) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < estimate.transform->rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(estimate.transform->cols()));
      for (Eigen::Index k = 0; k < estimate.transform->cols(); ++k) row[k] = (*estimate.transform)(i, k);
      rows.push_back(row);
    }
    j["transform"] = rows;
  }
  return j.dump();
}

}  // namespace ebard
