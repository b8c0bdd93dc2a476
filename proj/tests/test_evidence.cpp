#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ebard/errors.hpp"
#include "ebard/evidence.hpp"
#include "ebard/io.hpp"
#include "ebard/oracle.hpp"
#include "ebard/verify.hpp"

using namespace ebard;

namespace {

WhitenedProblem problem(Eigen::VectorXd y, double n) { return WhitenedProblem(std::move(y), n); }

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

double central_difference(const std::function<double(double)>& f, double x) {
  const double h = 1e-5 * x;
  return (f(x + h) - f(x - h)) / (2 * h);
}

}  // namespace

TEST_SUITE("evidence") {
  TEST_CASE("ridge shape and maximizer") {
    const auto zero = problem(vec({0.0}), 1.0);
    std::vector<double> values;
    for (double l : default_grid()) values.push_back(log_z_ridge(zero, l));
    CHECK(std::is_sorted(values.begin(), values.end()));
    const auto two = problem(vec({2.0}), 1.0);
    CHECK(d_log_z_ridge(two, 1.0 / 3.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d_log_z_ridge(two, 0.3) > 0.0);
    CHECK(d_log_z_ridge(two, 0.4) < 0.0);
  }

  TEST_CASE("ridge matches quadrature for m = 3, n = 5") {
    const auto p = problem(vec({1.3, -2.2, 0.4}), 5.0);
    for (double l : {0.01, 0.5, 3.0, 200.0}) {
      const double q = quad_log_z(p, RegularizerSpec::ridge(), l, 1e-10).log_value;
      CHECK(std::abs(log_z_ridge(p, l) - q) <= 1e-8 * std::max(1.0, std::abs(q)));
    }
  }

  TEST_CASE("lasso 1-d") {
    // y = 0 collapses to twice one side
    const double l = 0.8;
    const double one_side = std::log(l / 2.0) + std::log(std::sqrt(std::numbers::pi / 2.0)) +
                            std::log(std::erfc(l / std::sqrt(2.0))) + l * l / 2.0;
    CHECK(log_z_lasso_1d(0.0, l, 1.0) == doctest::Approx(std::log(2.0) + one_side).epsilon(1e-13));
    CHECK(std::abs(log_z_lasso_1d(2.0, 1.0, 1.0) -
                   quad_log_z(problem(vec({2.0}), 1.0), RegularizerSpec::lasso(), 1.0).log_value) <=
          1e-10);
    CHECK(d_log_z_lasso_1d(2.0, 1e-3, 1.0) > 0.0);
    CHECK(d_log_z_lasso_1d(2.0, 2.0 / std::sqrt(3.0), 1.0) < 0.0);
    for (double lam : {1e-6, 1.0, 1e3, 1e6}) CHECK(std::isfinite(log_z_lasso_1d(30.0, lam, 1.0)));
  }

  TEST_CASE("lasso sums coordinates and matches 2-d quadrature") {
    const auto zero = problem(vec({0.0, 0.0}), 1.0);
    CHECK(log_z_lasso(zero, 0.7) == doctest::Approx(2.0 * log_z_lasso_1d(0.0, 0.7, 1.0)));
    const auto p = problem(vec({1.0, 2.0}), 1.0);
    const double q = quad_log_z(p, RegularizerSpec::lasso(), 0.5).log_value;
    CHECK(std::abs(log_z_lasso(p, 0.5) - q) <= 1e-8 * std::max(1.0, std::abs(q)));
  }

  TEST_CASE("group lasso m = 3") {
    const auto p = problem(vec({2.0, 0.0, 0.0}), 1.0);
    const double q = quad_log_z(p, RegularizerSpec::group_lasso(), 1.0, 1e-9).log_value;
    CHECK(std::abs(log_z_group_lasso(p, 1.0) - q) <= 1e-7);

    // y~ = 0: f(L) = L^3((2L^2+1) erfcx L - 2L/sqrt(pi)) -> 1/sqrt(pi), so Z/Z_inf -> 1
    const auto zero = problem(vec({0.0, 0.0, 0.0}), 1.0);
    CHECK(std::abs(log_z_group_lasso(zero, 1e6)) <= 1e-8);
    for (double l : {1e-3, 0.1, 1.0, 10.0, 1e3}) CHECK(d_log_z_group_lasso(zero, l) > 0.0);

    // continuity as y~ -> 0
    for (double l : {0.01, 1.0, 100.0}) {
      CHECK(std::abs(log_z_group_lasso(problem(vec({1e-8, 0.0, 0.0}), 1.0), l) -
                     log_z_group_lasso(zero, l)) <= 1e-6);
    }

    // ||y~|| = sqrt(3): monotone on the grid
    const auto edge = problem(vec({1.0, 1.0, 1.0}), 1.0);
    std::vector<double> values;
    for (double l : default_grid()) values.push_back(log_z_group_lasso(edge, l));
    CHECK(slope_sign_changes(values) == 0);
    CHECK(values.back() > values.front());
  }

  TEST_CASE("group lasso derivative changes sign once below the bound") {
    const auto p = problem(vec({2.0, 0.0, 0.0}), 1.0);
    int changes = 0;
    double prev = d_log_z_group_lasso(p, 1e-3);
    for (double l : log_grid(1e-3, std::sqrt(18.0), 400)) {
      const double d = d_log_z_group_lasso(p, l);
      if ((d > 0) != (prev > 0)) ++changes;
      prev = d;
    }
    CHECK(changes == 1);
    CHECK(prev < 0.0);
  }

  TEST_CASE("analytic derivatives match finite differences") {
    Rng rng(3);
    std::normal_distribution<double> normal;
    for (int t = 0; t < 6; ++t) {
      const Eigen::Index m = t % 2 ? 1 : 3;
      Eigen::VectorXd y(m);
      for (Eigen::Index j = 0; j < m; ++j) y(j) = 2.0 * normal(rng);
      const auto p = problem(y, 1.0 + t);
      for (auto spec : {RegularizerSpec::ridge(), RegularizerSpec::lasso(), RegularizerSpec::group_lasso()}) {
        for (double l : {0.02, 0.9, 7.0, 300.0}) {
          const double fd = central_difference([&](double x) { return log_z_closed(p, spec, x); }, l);
          const double an = *d_log_z_closed(p, spec, l);
          CHECK(an == doctest::Approx(fd).epsilon(1e-5).scale(1e-9));
        }
      }
    }
  }

  TEST_CASE("large-argument series branch is continuous with the direct branch") {
    // lasso switches at a = L - Y = 6
    const double y = 1.0, n = 1.0;
    const double l = (6.0 + y / std::sqrt(2.0)) * std::sqrt(2.0 * n);
    const double lo = log_z_lasso_1d(y, l * (1 - 1e-9), n);
    const double hi = log_z_lasso_1d(y, l * (1 + 1e-9), n);
    CHECK(std::abs(hi - lo) <= 1e-11);
  }

  TEST_CASE("unsupported closed forms") {
    const auto p2 = problem(vec({1.0, 1.0}), 1.0);
    CHECK_THROWS_AS(log_z_group_lasso(p2, 1.0), UnsupportedError);
    CHECK_FALSE(has_closed_form(RegularizerSpec::group_lasso(), 2));
    const auto pt = log_z(p2, RegularizerSpec::group_lasso(), 1.0);
    CHECK(pt.branch == EvidenceBranch::Oracle);
    CHECK(log_z(problem(vec({1.0, 1.0, 1.0, 1.0}), 1.0), RegularizerSpec::lasso(), 1.0).branch ==
          EvidenceBranch::Closed);
    CHECK_THROWS_AS(log_z(problem(vec({1.0, 1.0, 1.0, 1.0}), 1.0), RegularizerSpec::group_lasso(), 1.0),
                    UnsupportedError);
    CHECK_THROWS_AS(log_z_ridge(p2, 0.0), DomainError);
    CHECK_THROWS_AS(log_z_lasso_1d(1.0, -1.0, 1.0), DomainError);
  }

  TEST_CASE("asymptote coefficients") {
    const Dataset d(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3));
    const auto a = asymptote(d, RegularizerSpec::ridge());
    CHECK(a.second_order_coeff == doctest::Approx(-1.5));
    CHECK(a.kappa == 2.0);
    CHECK(a.log_z_inf == doctest::Approx(-1.5 * std::log(2.0 * std::numbers::pi)));
    CHECK(asymptote(problem(vec({1.0, 1.0}), 3.0), RegularizerSpec::lasso()).second_order_coeff ==
          doctest::Approx(0.0));
    CHECK(asymptote(problem(vec({2.0, 0.0, 0.0}), 1.0), RegularizerSpec::group_lasso()).second_order_coeff ==
          doctest::Approx(2.0));
    CustomRegularizer c;
    c.h = [](std::span<const double> w) {
      double s = 0.0;
      for (double x : w) s += std::abs(x);
      return s;
    };
    const auto l1 = RegularizerSpec::custom(c, 1.0, 4);
    const Dataset d4(Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Ones(4));
    CHECK_THROWS_AS(asymptote(d4, l1), PreconditionError);
    // m <= 3: the second moment is measured by quadrature
    const Dataset d2(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(2, 1));
    CHECK(asymptote(d2, l1).sigma_w_sq == doctest::Approx(2.0).epsilon(1e-7));
  }

  TEST_CASE("asymptote sign matches interior maximum") {
    Rng rng(9);
    std::normal_distribution<double> normal;
    for (int t = 0; t < 30; ++t) {
      Eigen::VectorXd y(3);
      for (int j = 0; j < 3; ++j) y(j) = 1.3 * normal(rng);
      if (std::abs(y.squaredNorm() - 3.0) < 0.3) continue;
      const auto p = problem(y, 2.0);
      for (auto spec : {RegularizerSpec::ridge(), RegularizerSpec::lasso(), RegularizerSpec::group_lasso()}) {
        std::vector<double> v;
        for (double l : log_grid(1e-3, 1e6, 120)) v.push_back(log_z_closed(p, spec, l));
        const bool interior = slope_sign_changes(v) == 1;
        CHECK((asymptote(p, spec).second_order_coeff > 0) == interior);
      }
    }
  }

  TEST_CASE("curves and grids") {
    const auto g = log_grid(1e-2, 1e2, 5);
    REQUIRE(g.size() == 5);
    CHECK(g[2] == doctest::Approx(1.0));
    CHECK(g.front() == 1e-2);
    CHECK(g.back() == 1e2);
    CHECK(default_grid().size() == 61);
    const auto c = evidence_curve(problem(vec({2.0}), 1.0), RegularizerSpec::ridge(), g);
    CHECK(c.points.size() == 5);
    const auto s = shift_curve(c, -1.0);
    CHECK(s.points[3].log_z == doctest::Approx(c.points[3].log_z - 1.0));
    CHECK(s.asymptote.log_z_inf == doctest::Approx(c.asymptote.log_z_inf - 1.0));
    const std::string csv = curve_to_csv(c);
    CHECK(csv.rfind("lambda,log_z,branch\n", 0) == 0);
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  }
}
