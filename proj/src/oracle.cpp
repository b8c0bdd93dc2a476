#include "ebard/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <limits>
#include <numbers>
#include <vector>

#include "ebard/errors.hpp"

namespace ebard {
namespace {

// 15-point Kronrod rule with its embedded 7-point Gauss rule (QUADPACK qk15).
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

constexpr std::size_t kMaxIntervals = 4000;
constexpr double kTruncationSigmas = 12.0;

template <std::size_t N>
using Vals = std::array<double, N>;

struct QuadStats {
  bool converged = true;
};

template <std::size_t N>
struct Panel {
  double a;
  double b;
  Vals<N> value;
  double error;
};

template <std::size_t N, class F>
Panel<N> gauss_kronrod(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const Vals<N> fc = f(center);
  Vals<N> resk{};
  Vals<N> resg{};
  for (std::size_t k = 0; k < N; ++k) {
    resk[k] = fc[k] * kWgk[7];
    resg[k] = fc[k] * kWg[3];
  }
  for (std::size_t j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const Vals<N> f1 = f(center - dx);
    const Vals<N> f2 = f(center + dx);
    for (std::size_t k = 0; k < N; ++k) {
      const double pair = f1[k] + f2[k];
      resk[k] += kWgk[j] * pair;
      if (j % 2 == 1) resg[k] += kWg[j / 2] * pair;
    }
  }
  Panel<N> p{a, b, {}, 0.0};
  for (std::size_t k = 0; k < N; ++k) {
    p.value[k] = resk[k] * half;
    p.error = std::max(p.error, std::abs((resk[k] - resg[k]) * half));
  }
  return p;
}

// Global adaptive bisection over the panels between consecutive breakpoints.
// Stops when the summed error is below rel_tol times |component 0|.
template <std::size_t N, class F>
Vals<N> integrate_axis(F&& f, const std::vector<double>& breaks, double rel_tol, QuadStats& stats,
                       double* error_out = nullptr, std::size_t* intervals_out = nullptr) {
  auto by_error = [](const Panel<N>& x, const Panel<N>& y) { return x.error < y.error; };
  std::vector<Panel<N>> heap;
  heap.reserve(64);
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    heap.push_back(gauss_kronrod<N>(f, breaks[i], breaks[i + 1]));
  }
  std::make_heap(heap.begin(), heap.end(), by_error);

  auto totals = [&](Vals<N>& sum, double& err) {
    sum.fill(0.0);
    err = 0.0;
    for (const auto& p : heap) {
      for (std::size_t k = 0; k < N; ++k) sum[k] += p.value[k];
      err += p.error;
    }
  };
  Vals<N> sum{};
  double err = 0.0;
  totals(sum, err);
  std::size_t steps = 0;
  while (true) {
    // component 0 is the integral itself; the others are weighted by it
    const double scale = std::abs(sum[0]);
    if (err <= rel_tol * scale || err <= std::numeric_limits<double>::min()) break;
    if (err <= 64.0 * std::numeric_limits<double>::epsilon() * scale) break;
    if (heap.size() >= kMaxIntervals) {
      stats.converged = false;
      break;
    }
    std::pop_heap(heap.begin(), heap.end(), by_error);
    const Panel<N> worst = heap.back();
    heap.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      stats.converged = false;
      heap.push_back(worst);
      std::push_heap(heap.begin(), heap.end(), by_error);
      break;
    }
    const Panel<N> left = gauss_kronrod<N>(f, worst.a, mid);
    const Panel<N> right = gauss_kronrod<N>(f, mid, worst.b);
    heap.push_back(left);
    std::push_heap(heap.begin(), heap.end(), by_error);
    heap.push_back(right);
    std::push_heap(heap.begin(), heap.end(), by_error);
    for (std::size_t k = 0; k < N; ++k) sum[k] += left.value[k] + right.value[k] - worst.value[k];
    err += left.error + right.error - worst.error;
    if (++steps % 64 == 0) totals(sum, err);
  }
  totals(sum, err);
  if (error_out) *error_out = err;
  if (intervals_out) *intervals_out = heap.size();
  return sum;
}

// Breakpoints on [lo, hi]: the endpoints, 0 when inside, a geometric ladder
// toward 0 down to min_scale, and any extra points.
std::vector<double> axis_breaks(double lo, double hi, double min_scale,
                                std::initializer_list<double> extra = {}) {
  std::vector<double> pts{lo, hi};
  if (lo < 0.0 && hi > 0.0) pts.push_back(0.0);
  for (const auto [side, sign] : {std::pair{hi, 1.0}, std::pair{-lo, -1.0}}) {
    if (side <= 0.0) continue;
    for (double x = side / 4.0; x > min_scale; x /= 4.0) pts.push_back(sign * x);
    if (side > min_scale) pts.push_back(sign * min_scale);
  }
  for (double e : extra) {
    if (e > lo && e < hi) pts.push_back(e);
  }
  std::sort(pts.begin(), pts.end());
  std::vector<double> out;
  for (double p : pts) {
    if (out.empty() || p - out.back() > 1e-12 * std::max(1.0, std::abs(p))) out.push_back(p);
  }
  if (out.back() != hi) out.back() = hi;
  return out;
}

// Nested integration over the box; axis d uses breaks[d]. Inner axes run at a
// quarter of the outer tolerance.
template <std::size_t N, class F>
Vals<N> integrate_nested(F& f, int m, const std::vector<std::vector<double>>& breaks,
                         double rel_tol, QuadStats& stats, double* error_out,
                         std::size_t* intervals_out) {
  std::array<double, 3> u{};
  std::function<Vals<N>(int)> level = [&](int d) -> Vals<N> {
    const double tol = rel_tol * std::pow(0.25, d);
    if (d == m - 1) {
      return integrate_axis<N>(
          [&](double x) {
            u[d] = x;
            return f(std::span<const double>(u.data(), static_cast<std::size_t>(m)));
          },
          breaks[d], tol, stats);
    }
    return integrate_axis<N>(
        [&](double x) {
          u[d] = x;
          return level(d + 1);
        },
        breaks[d], tol, stats);
  };
  if (m == 1) {
    return integrate_axis<N>(
        [&](double x) {
          u[0] = x;
          return f(std::span<const double>(u.data(), 1));
        },
        breaks[0], rel_tol, stats, error_out, intervals_out);
  }
  return integrate_axis<N>(
      [&](double x) {
        u[0] = x;
        return level(1);
      },
      breaks[0], rel_tol, stats, error_out, intervals_out);
}

void require_lambda(double lambda, const char* fn) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError(std::string(fn) + ": lambda must be positive and finite");
  }
}

void require_small_m(Eigen::Index m, const char* fn) {
  if (m < 1 || m > 3) {
    throw UnsupportedError(std::string(fn) +
                           ": quadrature oracle supports 1 <= m <= 3; use Monte Carlo for larger m");
  }
}

// Length scale of the prior factor exp(-lambda h(u / sqrt(n))).
double prior_scale(double lambda, double n, double kappa) {
  return std::sqrt(n) * std::pow(lambda, -1.0 / kappa);
}

struct EvidenceQuad {
  double log_integral;  // log of the integral of exp(E(u)) du
  double posterior_h;   // E_post[h(u / sqrt(n))]
  double rel_error;
  std::size_t intervals;
  bool converged;
};

// E(u) = -||y~ - u||^2 / 2 - lambda h(u / sqrt(n)), integrated over the box.
EvidenceQuad integrate_evidence(const WhitenedProblem& problem, const RegularizerSpec& spec,
                                double lambda, double tol) {
  const int m = static_cast<int>(problem.m());
  const Eigen::VectorXd& yt = problem.y_tilde();
  const double inv_sqrt_n = 1.0 / std::sqrt(problem.n());

  auto exponent = [&](std::span<const double> u, double& h_out) {
    std::array<double, 3> w{};
    double q = 0.0;
    for (int k = 0; k < m; ++k) {
      w[k] = u[k] * inv_sqrt_n;
      const double d = u[k] - yt(k);
      q += d * d;
    }
    h_out = spec.h(std::span<const double>(w.data(), static_cast<std::size_t>(m)));
    return -0.5 * q - lambda * h_out;
  };

  // Shift so the integrand peaks near 1; the maximum lies close to the segment [0, y~].
  double shift = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 64; ++i) {
    std::array<double, 3> u{};
    for (int k = 0; k < m; ++k) u[k] = yt(k) * i / 64.0;
    double h = 0.0;
    shift = std::max(shift, exponent(std::span<const double>(u.data(), m), h));
  }

  auto integrand = [&](std::span<const double> u) -> Vals<2> {
    double h = 0.0;
    const double e = std::exp(exponent(u, h) - shift);
    return {e, h * e};
  };

  const double radius = yt.norm() + kTruncationSigmas;
  const double min_scale = std::min(1.0, prior_scale(lambda, problem.n(), spec.kappa())) / 8.0;
  std::vector<std::vector<double>> breaks;
  for (int k = 0; k < m; ++k) breaks.push_back(axis_breaks(-radius, radius, min_scale, {yt(k)}));

  QuadStats stats;
  double err = 0.0;
  std::size_t intervals = 0;
  const Vals<2> v = integrate_nested<2>(integrand, m, breaks, tol, stats, &err, &intervals);
  return {shift + std::log(v[0]), v[1] / v[0], err / v[0], intervals, stats.converged};
}

double check_converged(double log_value, double rel_error, bool converged, double tol,
                       const char* fn) {
  if (!converged || !(rel_error <= tol) || !std::isfinite(log_value)) {
    throw ConvergenceError(std::string(fn) + ": tolerance " + std::to_string(tol) +
                               " not reached (estimated relative error " +
                               std::to_string(rel_error) + ")",
                           log_value, rel_error);
  }
  return log_value;
}

double builtin_log_normalizer(RegularizerKind kind, Eigen::Index m) {
  const double md = static_cast<double>(m);
  switch (kind) {
    case RegularizerKind::Ridge:
      return 0.5 * md * std::log(2.0 * std::numbers::pi);
    case RegularizerKind::Lasso:
      return md * std::numbers::ln2;
    case RegularizerKind::GroupLasso:
      // Surface area of the unit sphere times Gamma(m).
      return std::log(2.0) + 0.5 * md * std::log(std::numbers::pi) - std::lgamma(0.5 * md) +
             std::lgamma(md);
    case RegularizerKind::Custom:
      break;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// Radius beyond which exp(-h) < exp(-50) in every sampled direction.
double prior_radius(const RegularizerSpec& spec, Eigen::Index m) {
  switch (spec.kind()) {
    case RegularizerKind::Ridge:
      return 14.0;
    case RegularizerKind::Lasso:
    case RegularizerKind::GroupLasso:
      return 50.0;
    case RegularizerKind::Custom:
      break;
  }
  Rng rng(7);
  std::normal_distribution<double> normal;
  std::vector<double> dir(static_cast<std::size_t>(m));
  double h_min = std::numeric_limits<double>::infinity();
  for (int probe = 0; probe < 256; ++probe) {
    double norm = 0.0;
    for (auto& x : dir) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : dir) x /= norm;
    h_min = std::min(h_min, spec.h(dir));
  }
  if (!(h_min > 0.0)) throw DomainError("custom h vanishes on the unit sphere; prior not integrable");
  return std::pow(50.0 / h_min, 1.0 / spec.kappa());
}

}  // namespace

BoxIntegral integrate_box(const std::function<double(std::span<const double>)>& f, Eigen::Index m,
                          double radius, double rel_tol, double min_scale) {
  require_small_m(m, "integrate_box");
  if (!(radius > 0.0)) throw DomainError("integrate_box: radius must be positive");
  std::vector<std::vector<double>> breaks(static_cast<std::size_t>(m),
                                          axis_breaks(-radius, radius, min_scale));
  auto wrapped = [&](std::span<const double> u) -> Vals<1> { return {f(u)}; };
  QuadStats stats;
  double err = 0.0;
  std::size_t intervals = 0;
  const Vals<1> v =
      integrate_nested<1>(wrapped, static_cast<int>(m), breaks, rel_tol, stats, &err, &intervals);
  if (!stats.converged) {
    throw ConvergenceError("integrate_box: subdivision budget exhausted", std::log(std::abs(v[0])),
                           err);
  }
  return {v[0], err, intervals};
}

double log_prior_normalizer(const RegularizerSpec& spec, Eigen::Index m, double tol) {
  if (spec.kind() != RegularizerKind::Custom) return builtin_log_normalizer(spec.kind(), m);
  require_small_m(m, "log_prior_normalizer");
  const double radius = prior_radius(spec, m);
  const auto r = integrate_box([&](std::span<const double> w) { return std::exp(-spec.h(w)); }, m,
                               radius, tol);
  return std::log(r.value);
}

QuadratureResult quad_log_z(const WhitenedProblem& problem, const RegularizerSpec& spec,
                            double lambda, double tol) {
  require_lambda(lambda, "quad_log_z");
  require_small_m(problem.m(), "quad_log_z");
  const double md = static_cast<double>(problem.m());
  const EvidenceQuad q = integrate_evidence(problem, spec, lambda, tol);
  const double log_value = 0.5 * problem.y_tilde_norm_sq() - 0.5 * md * std::log(problem.n()) +
                           md / spec.kappa() * std::log(lambda) -
                           log_prior_normalizer(spec, problem.m(), tol) + q.log_integral;
  check_converged(log_value, q.rel_error, q.converged, tol, "quad_log_z");
  return {log_value, q.rel_error, q.intervals};
}

double quad_d_log_z(const WhitenedProblem& problem, const RegularizerSpec& spec, double lambda,
                    double tol) {
  require_lambda(lambda, "quad_d_log_z");
  require_small_m(problem.m(), "quad_d_log_z");
  const EvidenceQuad q = integrate_evidence(problem, spec, lambda, tol);
  check_converged(q.log_integral, q.rel_error, q.converged, tol, "quad_d_log_z");
  return static_cast<double>(problem.m()) / (spec.kappa() * lambda) - q.posterior_h;
}

namespace {

EvidenceQuad integrate_polar(const WhitenedProblem& problem, double lambda, double tol) {
  if (problem.m() != 3) {
    throw UnsupportedError("polar oracle is specific to group lasso with m = 3");
  }
  const double s = std::sqrt(problem.y_tilde_norm_sq());
  const double sqrt_n = std::sqrt(problem.n());
  const double a = lambda / sqrt_n;
  // Maximum of the exponent over the half line t = 1.
  const double r_star = std::max(0.0, s - a);
  const double shift = -0.5 * (r_star - s) * (r_star - s) - a * r_star;

  auto integrand = [&](std::span<const double> x) -> Vals<2> {
    const double r = x[0];
    const double t = x[1];
    const double e = 2.0 * std::numbers::pi * r * r *
                     std::exp(-0.5 * (r * r - 2.0 * r * s * t + s * s) - a * r - shift);
    return {e, (r / sqrt_n) * e};
  };

  const double radius = s + kTruncationSigmas;
  const double min_scale = std::min(1.0, sqrt_n / lambda) / 8.0;
  std::vector<std::vector<double>> breaks;
  breaks.push_back(axis_breaks(0.0, radius, min_scale, {s}));
  std::vector<double> t_breaks{-1.0, 0.0};
  for (int k = 1; k <= 8; ++k) t_breaks.push_back(1.0 - std::pow(4.0, -k));
  t_breaks.push_back(1.0);
  breaks.push_back(t_breaks);

  QuadStats stats;
  double err = 0.0;
  std::size_t intervals = 0;
  const Vals<2> v = integrate_nested<2>(integrand, 2, breaks, tol, stats, &err, &intervals);
  return {shift + std::log(v[0]), v[1] / v[0], err / v[0], intervals, stats.converged};
}

}  // namespace

QuadratureResult quad_log_z_polar(const WhitenedProblem& problem, double lambda, double tol) {
  require_lambda(lambda, "quad_log_z_polar");
  const EvidenceQuad q = integrate_polar(problem, lambda, tol);
  const double log_value = 0.5 * problem.y_tilde_norm_sq() - 1.5 * std::log(problem.n()) +
                           3.0 * std::log(lambda) -
                           builtin_log_normalizer(RegularizerKind::GroupLasso, 3) + q.log_integral;
  check_converged(log_value, q.rel_error, q.converged, tol, "quad_log_z_polar");
  return {log_value, q.rel_error, q.intervals};
}

double quad_d_log_z_polar(const WhitenedProblem& problem, double lambda, double tol) {
  require_lambda(lambda, "quad_d_log_z_polar");
  const EvidenceQuad q = integrate_polar(problem, lambda, tol);
  check_converged(q.log_integral, q.rel_error, q.converged, tol, "quad_d_log_z_polar");
  return 3.0 / lambda - q.posterior_h;
}

Moments quad_moments(const RegularizerSpec& spec, Eigen::Index m, double tol) {
  require_small_m(m, "quad_moments");
  const int md = static_cast<int>(m);
  // Components: normalizer, m first moments, m(m+1)/2 second moments.
  constexpr std::size_t kComponents = 10;
  auto integrand = [&](std::span<const double> w) -> Vals<kComponents> {
    Vals<kComponents> out{};
    const double p = std::exp(-spec.h(w));
    out[0] = p;
    std::size_t c = 1;
    for (int i = 0; i < md; ++i) out[c++] = w[i] * p;
    for (int i = 0; i < md; ++i) {
      for (int j = i; j < md; ++j) out[c++] = w[i] * w[j] * p;
    }
    return out;
  };
  const double radius = prior_radius(spec, m);
  std::vector<std::vector<double>> breaks(static_cast<std::size_t>(m),
                                          axis_breaks(-radius, radius, 1e-2));
  QuadStats stats;
  double err = 0.0;
  const auto v = integrate_nested<kComponents>(integrand, md, breaks, tol, stats, &err, nullptr);
  if (!stats.converged || !(err <= tol * v[0])) {
    throw ConvergenceError("quad_moments: tolerance not reached", std::log(v[0]), err / v[0]);
  }
  Moments out{Eigen::VectorXd(m), Eigen::MatrixXd(m, m)};
  std::size_t c = 1;
  for (int i = 0; i < md; ++i) out.mean(i) = v[c++] / v[0];
  for (int i = 0; i < md; ++i) {
    for (int j = i; j < md; ++j) {
      out.cov(i, j) = out.cov(j, i) = v[c++] / v[0];
    }
  }
  out.cov -= out.mean * out.mean.transpose();
  return out;
}

double argmax_lambda_oracle(const WhitenedProblem& problem, const RegularizerSpec& spec,
                            double tol) {
  const bool polar = spec.kind() == RegularizerKind::GroupLasso && problem.m() == 3;
  const double quad_tol = std::min(1e-11, tol);
  auto slope = [&](double lambda) {
    return polar ? quad_d_log_z_polar(problem, lambda, quad_tol)
                 : quad_d_log_z(problem, spec, lambda, quad_tol);
  };

  // the slope is a difference of two O(m / lambda) terms; below this band its
  // sign is quadrature noise
  auto clearly_negative = [&](double lambda) {
    return slope(lambda) < -1e3 * quad_tol * static_cast<double>(problem.m()) / (spec.kappa() * lambda);
  };

  double lo = std::sqrt(problem.n());
  double hi = lo;
  if (slope(lo) > 0.0) {
    do {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e8) {
        throw PreconditionError("argmax_lambda_oracle: evidence still increasing at 1e8 (divergent branch?)");
      }
    } while (!clearly_negative(hi));
  } else {
    do {
      hi = lo;
      lo *= 0.5;
      if (lo < 1e-12) throw PreconditionError("argmax_lambda_oracle: no interior maximum found");
    } while (slope(lo) <= 0.0);
  }
  while (std::log(hi / lo) > tol) {
    const double mid = std::sqrt(lo * hi);
    if (slope(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::sqrt(lo * hi);
}

double ridge_log_z_exact(const Dataset& data, double lambda) {
  require_lambda(lambda, "ridge_log_z_exact");
  const Eigen::MatrixXd& phi = data.design();
  const Eigen::VectorXd& y = data.response();
  const Eigen::Index m = phi.cols();
  const Eigen::MatrixXd gram = phi.transpose() * phi;
  const Eigen::VectorXd b = phi.transpose() * y;
  const Eigen::MatrixXd a = gram + lambda * Eigen::MatrixXd::Identity(m, m);
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  // det(I_n + Phi Phi^T / l) = det(I_m + Phi^T Phi / l) = det(A) / l^m.
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum() -
                         static_cast<double>(m) * std::log(lambda);
  const double quad = y.squaredNorm() - b.dot(llt.solve(b));
  return -0.5 * static_cast<double>(data.n()) * std::log(2.0 * std::numbers::pi) - 0.5 * log_det -
         0.5 * quad;
}

}  // namespace ebard
