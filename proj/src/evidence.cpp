#include "ebard/evidence.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ebard/errors.hpp"
#include "ebard/oracle.hpp"
#include "ebard/special.hpp"

namespace ebard {
namespace {

constexpr double kInvSqrtPi = std::numbers::inv_sqrtpi;
constexpr double kTwoInvSqrtPi = 2.0 * std::numbers::inv_sqrtpi;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// From here on the erfcx difference cancels badly; use the asymptotic series.
constexpr double kSeriesThreshold = 6.0;
// Group lasso with M below this uses the integral form of g(b) - g(a).
constexpr double kSmallM = 0.5;
constexpr int kMaxSeriesTerms = 200;

double log_half_sqrt_pi() {
  static const double v = std::log(0.5 * std::sqrt(std::numbers::pi));
  return v;
}

void require_lambda(double lambda, const char* fn) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError(std::string(fn) + ": lambda must be positive and finite (got " +
                      std::to_string(lambda) + ")");
  }
}

double logaddexp(double x, double y) {
  if (x == kNegInf) return y;
  if (y == kNegInf) return x;
  const double hi = std::max(x, y);
  return hi + std::log1p(std::exp(-std::abs(x - y)));
}

double first_order_erfcx(double x) {
  if (!std::isfinite(x)) throw DomainError("erfcx: non-finite argument");
  return x > 0.0 ? kInvSqrtPi / x : 1.0 - kTwoInvSqrtPi * x;
}

double first_order_log_erfcx(double x) { return std::log(first_order_erfcx(x)); }

// c_1 = 1/2, c_{k+1} = -c_k (2k+1)/2: minus the coefficients of the
// asymptotic expansion sqrt(pi) erfcx(x) = sum_k d_k x^{-2k-1}.
struct SeriesCoeff {
  int k = 1;
  double c = 0.5;
  void next() {
    c *= -(2.0 * k + 1.0) / 2.0;
    ++k;
  }
};

// Z_rel - 1 and dZ/dLambda for the 1-D lasso when a = Lambda - Y is large.
struct SeriesValue {
  double z_minus_one;
  double dz;
};

SeriesValue lasso_series(double big_l, double y, double a, double b) {
  const double ia = 1.0 / a;
  const double ib = 1.0 / b;
  const double iab = ia * ib;
  double z = y * y * iab;
  double dz = -2.0 * big_l * y * y * iab * iab;
  double last = std::numeric_limits<double>::infinity();
  SeriesCoeff co;
  double pa = ia;  // a^{-(2k+1)}
  double pb = ib;
  for (int it = 0; it < kMaxSeriesTerms; ++it) {
    pa *= ia * ia;
    pb *= ib * ib;
    const double term = -0.5 * big_l * co.c * (pa + pb);
    const double dterm = -0.5 * co.c * (pa + pb) +
                         0.5 * big_l * co.c * (2.0 * co.k + 1.0) * (pa * ia + pb * ib);
    if (std::abs(term) > last) break;
    z += term;
    dz += dterm;
    last = std::abs(term);
    if (last < 1e-17 * std::max(std::abs(z), 1e-300)) break;
    co.next();
  }
  return {z, dz};
}

struct LassoScaled {
  double big_l;  // Lambda = lambda / sqrt(2n)
  double y;      // |y~| / sqrt 2
  double a;
  double b;
};

LassoScaled lasso_scaled(double y_scalar, double lambda, double n) {
  const double big_l = lambda / std::sqrt(2.0 * n);
  const double y = std::abs(y_scalar) / std::numbers::sqrt2;
  return {big_l, y, big_l - y, big_l + y};
}

double lasso_1d_impl(double y_scalar, double lambda, double n, const detail::SpecialBackend& sf) {
  require_lambda(lambda, "log_z_lasso_1d");
  const LassoScaled s = lasso_scaled(y_scalar, lambda, n);
  if (&sf == &detail::default_backend() && s.a >= kSeriesThreshold) {
    return std::log1p(lasso_series(s.big_l, s.y, s.a, s.b).z_minus_one);
  }
  return log_half_sqrt_pi() + std::log(s.big_l) + logaddexp(sf.log_erfcx(s.a), sf.log_erfcx(s.b));
}

// g(x) = x erfcx(x) and its first two derivatives.
double g0(double x) { return x * erfcx(x); }
double g1(double x) { return (1.0 + 2.0 * x * x) * erfcx(x) - kTwoInvSqrtPi * x; }
double g2(double x) {
  return (6.0 * x + 4.0 * x * x * x) * erfcx(x) - kTwoInvSqrtPi * (2.0 + 2.0 * x * x);
}

struct GroupScaled {
  double big_l;
  double m;  // ||y~|| / sqrt 2
  double a;
  double b;
};

GroupScaled group_scaled(const WhitenedProblem& problem, double lambda) {
  const double big_l = lambda / std::sqrt(2.0 * problem.n());
  const double m = std::sqrt(problem.y_tilde_norm_sq()) / std::numbers::sqrt2;
  return {big_l, m, big_l - m, big_l + m};
}

// Z_rel - 1 and dZ/dLambda from Z = Lambda^3 sum_k c_k F_{2k}, where
// F_p = sum_{j<p} a^{-(j+1)} b^{-(p-j)}; F_1 = 1/(ab), F_{p+1} = (F_p + b^{-(p+1)})/a.
SeriesValue group_series(double big_l, double m, double a, double b) {
  const double ia = 1.0 / a;
  const double ib = 1.0 / b;
  const double iab = ia * ib;
  const double l3 = big_l * big_l * big_l;
  double z = m * m * (2.0 * big_l * big_l - m * m) * iab * iab;
  double dz = -4.0 * l3 * m * m * iab * iab * iab;
  // F_2, F_3 and the power b^{-3}.
  double ibp = ib * ib;
  double f = iab;
  f = ia * (f + ibp);  // F_2
  ibp *= ib;
  double f_next = ia * (f + ibp);  // F_3
  SeriesCoeff co;
  double last = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kMaxSeriesTerms; ++it) {
    // advance from (F_{2k}, F_{2k+1}) to (F_{2k+2}, F_{2k+3})
    ibp *= ib;
    f = ia * (f_next + ibp);
    ibp *= ib;
    f_next = ia * (f + ibp);
    co.next();
    const double term = co.c * l3 * f;
    const double dterm = co.c * (3.0 * big_l * big_l * f - 2.0 * co.k * l3 * f_next);
    if (std::abs(term) > last) break;
    z += term;
    dz += dterm;
    last = std::abs(term);
    if (last < 1e-17 * std::max(std::abs(z), 1e-300)) break;
  }
  return {z, dz};
}

double group3_impl(const WhitenedProblem& problem, double lambda, const detail::SpecialBackend& sf) {
  const GroupScaled s = group_scaled(problem, lambda);
  const bool exact = &sf == &detail::default_backend();
  if (exact && s.a >= kSeriesThreshold) {
    return std::log1p(group_series(s.big_l, s.m, s.a, s.b).z_minus_one);
  }
  const double prefix = log_half_sqrt_pi() + 3.0 * std::log(s.big_l);
  auto g = [&](double x) { return x * sf.erfcx(x); };
  if (s.m < kSmallM) {
    // D / M = int_{-1}^{1} g'(Lambda + M t) dt
    auto gp = [&](double t) {
      const double x = s.big_l + s.m * t;
      return (1.0 + 2.0 * x * x) * sf.erfcx(x) - kTwoInvSqrtPi * x;
    };
    const double d_over_m = boost::math::quadrature::gauss<double, 20>::integrate(gp, -1.0, 1.0);
    return prefix + std::log(d_over_m);
  }
  double log_d;
  if (s.a >= 0.0) {
    log_d = std::log(g(s.b) - g(s.a));
  } else {
    log_d = logaddexp(std::log(s.b) + sf.log_erfcx(s.b), std::log(-s.a) + sf.log_erfcx(s.a));
  }
  return prefix - std::log(s.m) + log_d;
}

double d_group3(const WhitenedProblem& problem, double lambda) {
  const GroupScaled s = group_scaled(problem, lambda);
  const double chain = 1.0 / std::sqrt(2.0 * problem.n());
  if (s.a >= kSeriesThreshold) {
    const SeriesValue v = group_series(s.big_l, s.m, s.a, s.b);
    return v.dz / (1.0 + v.z_minus_one) * chain;
  }
  double ratio;
  if (s.m < kSmallM) {
    using rule = boost::math::quadrature::gauss<double, 20>;
    const double num = rule::integrate([&](double t) { return g2(s.big_l + s.m * t); }, -1.0, 1.0);
    const double den = rule::integrate([&](double t) { return g1(s.big_l + s.m * t); }, -1.0, 1.0);
    ratio = num / den;
  } else if (s.a >= 0.0) {
    ratio = (g1(s.b) - g1(s.a)) / (g0(s.b) - g0(s.a));
  } else {
    // Everything scaled by exp(-a^2) so erfcx(a) never overflows.
    const double ea2 = std::exp(-s.a * s.a);
    const double erfc_a = std::exp(log_erfcx(s.a) - s.a * s.a);
    const double ds = s.b * erfcx(s.b) * ea2 - s.a * erfc_a;
    const double dps = g1(s.b) * ea2 -
                       ((1.0 + 2.0 * s.a * s.a) * erfc_a - kTwoInvSqrtPi * s.a * ea2);
    ratio = dps / ds;
  }
  return (3.0 / s.big_l + ratio) * chain;
}

}  // namespace

std::string_view to_string(EvidenceBranch branch) {
  switch (branch) {
    case EvidenceBranch::Closed:
      return "Closed";
    case EvidenceBranch::MC:
      return "MC";
    case EvidenceBranch::Oracle:
      return "Oracle";
  }
  return "unknown";
}

double Asymptote::log_z(double lambda) const {
  const double x = second_order_coeff * std::pow(lambda, -2.0 / kappa);
  if (!(x > -1.0)) return std::numeric_limits<double>::quiet_NaN();
  return log_z_inf + std::log1p(x);
}

double log_z_ridge(const WhitenedProblem& problem, double lambda) {
  require_lambda(lambda, "log_z_ridge");
  const double n = problem.n();
  const double m = static_cast<double>(problem.m());
  return -0.5 * m * std::log1p(n / lambda) + problem.y_tilde_norm_sq() * n / (2.0 * (n + lambda));
}

double d_log_z_ridge(const WhitenedProblem& problem, double lambda) {
  require_lambda(lambda, "d_log_z_ridge");
  const double n = problem.n();
  const double m = static_cast<double>(problem.m());
  return m * n / (2.0 * lambda * (n + lambda)) -
         problem.y_tilde_norm_sq() * n / (2.0 * (n + lambda) * (n + lambda));
}

double log_z_lasso_1d(double y_scalar, double lambda, double n) {
  return lasso_1d_impl(y_scalar, lambda, n, detail::default_backend());
}

double d_log_z_lasso_1d(double y_scalar, double lambda, double n) {
  require_lambda(lambda, "d_log_z_lasso_1d");
  const LassoScaled s = lasso_scaled(y_scalar, lambda, n);
  const double chain = 1.0 / std::sqrt(2.0 * n);
  if (s.a >= kSeriesThreshold) {
    const SeriesValue v = lasso_series(s.big_l, s.y, s.a, s.b);
    return v.dz / (1.0 + v.z_minus_one) * chain;
  }
  const double la = log_erfcx(s.a);
  const double lb = log_erfcx(s.b);
  const double top = std::max(la, lb);
  const double wa = std::exp(la - top);
  const double wb = std::exp(lb - top);
  const double num = 2.0 * s.a * wa + 2.0 * s.b * wb - 2.0 * kTwoInvSqrtPi * std::exp(-top);
  return (1.0 / s.big_l + num / (wa + wb)) * chain;
}

double log_z_lasso(const WhitenedProblem& problem, double lambda) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < problem.m(); ++j) {
    total += log_z_lasso_1d(problem.y_tilde()(j), lambda, problem.n());
  }
  return total;
}

double d_log_z_lasso(const WhitenedProblem& problem, double lambda) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < problem.m(); ++j) {
    total += d_log_z_lasso_1d(problem.y_tilde()(j), lambda, problem.n());
  }
  return total;
}

double log_z_group_lasso(const WhitenedProblem& problem, double lambda) {
  return detail::log_z_group_lasso(problem, lambda, detail::default_backend());
}

double d_log_z_group_lasso(const WhitenedProblem& problem, double lambda) {
  require_lambda(lambda, "d_log_z_group_lasso");
  if (problem.m() == 1) return d_log_z_lasso_1d(problem.y_tilde()(0), lambda, problem.n());
  if (problem.m() == 3) return d_group3(problem, lambda);
  throw UnsupportedError("group lasso closed form exists only for group sizes 1 and 3 (got " +
                         std::to_string(problem.m()) + ")");
}

bool has_closed_form(const RegularizerSpec& spec, Eigen::Index m) {
  switch (spec.kind()) {
    case RegularizerKind::Ridge:
    case RegularizerKind::Lasso:
      return m >= 1;
    case RegularizerKind::GroupLasso:
      return m == 1 || m == 3;
    case RegularizerKind::Custom:
      return false;
  }
  return false;
}

double log_z_closed(const WhitenedProblem& problem, const RegularizerSpec& spec, double lambda) {
  switch (spec.kind()) {
    case RegularizerKind::Ridge:
      return log_z_ridge(problem, lambda);
    case RegularizerKind::Lasso:
      return log_z_lasso(problem, lambda);
    case RegularizerKind::GroupLasso:
      return log_z_group_lasso(problem, lambda);
    case RegularizerKind::Custom:
      break;
  }
  throw UnsupportedError("no closed-form evidence for custom regularizers");
}

std::optional<double> d_log_z_closed(const WhitenedProblem& problem, const RegularizerSpec& spec,
                                     double lambda) {
  if (!has_closed_form(spec, problem.m())) return std::nullopt;
  switch (spec.kind()) {
    case RegularizerKind::Ridge:
      return d_log_z_ridge(problem, lambda);
    case RegularizerKind::Lasso:
      return d_log_z_lasso(problem, lambda);
    case RegularizerKind::GroupLasso:
      return d_log_z_group_lasso(problem, lambda);
    case RegularizerKind::Custom:
      break;
  }
  return std::nullopt;
}

EvidencePoint log_z(const WhitenedProblem& problem, const RegularizerSpec& spec, double lambda) {
  if (has_closed_form(spec, problem.m())) {
    return {lambda, log_z_closed(problem, spec, lambda), EvidenceBranch::Closed, std::nullopt};
  }
  if (problem.m() <= 3) {
    return {lambda, quad_log_z(problem, spec, lambda).log_value, EvidenceBranch::Oracle,
            std::nullopt};
  }
  throw UnsupportedError("no closed form for " + std::string(to_string(spec.kind())) +
                         " with m = " + std::to_string(problem.m()) +
                         "; use the Monte Carlo engine");
}

namespace {

double sigma_for(const RegularizerSpec& spec, Eigen::Index m) {
  if (spec.kind() != RegularizerKind::Custom || spec.has_sigma_w_sq()) return spec.sigma_w_sq(m);
  if (m > 3) {
    throw PreconditionError(
        "custom regularizer without a measured prior second moment; attach one with "
        "with_sigma_w_sq");
  }
  const Moments mo = quad_moments(spec, m, 1e-8);
  return mo.cov.diagonal().mean();
}

}  // namespace

Asymptote asymptote(const Dataset& data, const RegularizerSpec& spec) {
  const double sigma = sigma_for(spec, data.m());
  const double n = static_cast<double>(data.n());
  const double proj = (data.design().transpose() * data.response()).squaredNorm();
  const double frob = data.design().squaredNorm();
  return {-0.5 * data.response().squaredNorm() - 0.5 * n * std::log(2.0 * std::numbers::pi),
          0.5 * sigma * (proj - frob), spec.kappa(), sigma};
}

Asymptote asymptote(const WhitenedProblem& problem, const RegularizerSpec& spec) {
  const double sigma = sigma_for(spec, problem.m());
  const double m = static_cast<double>(problem.m());
  return {0.0, 0.5 * sigma * problem.n() * (problem.y_tilde_norm_sq() - m), spec.kappa(), sigma};
}

std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi)) {
    throw DomainError("log_grid: need 0 < lo <= hi < inf");
  }
  if (points == 0) throw DomainError("log_grid: need at least one point");
  std::vector<double> out(points);
  if (points == 1) {
    out[0] = lo;
    return out;
  }
  // base 10 so decades land exactly on powers of ten
  const double llo = std::log10(lo);
  const double step = (std::log10(hi) - llo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) out[i] = std::pow(10.0, llo + step * static_cast<double>(i));
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::vector<double> default_grid() { return log_grid(1e-3, 1e3, 61); }

EvidenceCurve evidence_curve(const WhitenedProblem& problem, const RegularizerSpec& spec,
                             const std::vector<double>& grid) {
  EvidenceCurve curve{{}, asymptote(problem, spec)};
  curve.points.reserve(grid.size());
  for (double lambda : grid) curve.points.push_back(log_z(problem, spec, lambda));
  return curve;
}

EvidenceCurve shift_curve(EvidenceCurve curve, double offset) {
  for (auto& p : curve.points) p.log_z += offset;
  curve.asymptote.log_z_inf += offset;
  return curve;
}

namespace detail {

const SpecialBackend& default_backend() {
  static const SpecialBackend b{&ebard::erfcx, &ebard::log_erfcx};
  return b;
}

const SpecialBackend& first_order_backend() {
  static const SpecialBackend b{&first_order_erfcx, &first_order_log_erfcx};
  return b;
}

double log_z_lasso_1d(double y_scalar, double lambda, double n, const SpecialBackend& sf) {
  return lasso_1d_impl(y_scalar, lambda, n, sf);
}

double log_z_group_lasso(const WhitenedProblem& problem, double lambda, const SpecialBackend& sf) {
  require_lambda(lambda, "log_z_group_lasso");
  if (problem.m() == 1) return lasso_1d_impl(problem.y_tilde()(0), lambda, problem.n(), sf);
  if (problem.m() == 3) return group3_impl(problem, lambda, sf);
  throw UnsupportedError("group lasso closed form exists only for group sizes 1 and 3 (got " +
                         std::to_string(problem.m()) + ")");
}

}  // namespace detail
}  // namespace ebard
