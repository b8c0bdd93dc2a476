#include "ebard/special.hpp"

#include <cmath>
#include <numbers>

#include "ebard/errors.hpp"

namespace ebard {
namespace {

// Below the seam erfc(x) is evaluated directly; above it the Laplace
// continued fraction converges to full precision within 40 terms.
constexpr double kSeam = 3.0;

void require_finite(double x, const char* fn) {
  if (!std::isfinite(x)) {
    throw DomainError(std::string(fn) + ": argument must be finite");
  }
}

// exp(x*x) with the rounding error of the square folded back in.
double exp_square(double x) {
  const double hi = x * x;
  const double lo = std::fma(x, x, -hi);
  return std::exp(hi) * (1.0 + lo);
}

// erfcx(x) = 1 / (sqrt(pi) * (x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))))
double erfcx_continued_fraction(double x) {
  const int depth = x < 6.0 ? 40 : (x < 25.0 ? 20 : 8);
  double t = x;
  for (int k = depth; k >= 1; --k) {
    t = x + 0.5 * k / t;
  }
  return std::numbers::inv_sqrtpi / t;
}

}  // namespace

double erfcx(double x) {
  require_finite(x, "erfcx");
  if (x >= kSeam) {
    return erfcx_continued_fraction(x);
  }
  if (x >= 0.0) {
    return exp_square(x) * std::erfc(x);
  }
  return exp_square(x) * (1.0 + std::erf(-x));
}

double log_erfcx(double x) {
  require_finite(x, "log_erfcx");
  if (x >= 0.0) {
    return std::log(erfcx(x));
  }
  const double hi = x * x;
  const double lo = std::fma(x, x, -hi);
  return hi + (lo + std::log1p(std::erf(-x)));
}

}  // namespace ebard
