#pragma once

namespace ebard {

/// Scaled complementary error function, erfcx(x) = exp(x^2) * erfc(x).
///
/// Accurate to a few ulps for x >= 0. For x < 0 the value is computed as
/// exp(x^2) * (1 + erf(-x)), which carries the relative accuracy of exp(x^2)
/// (about |x|^2 ulps) and overflows to +inf below x ~ -26.6, where the true
/// value exceeds the double range. Throws DomainError on non-finite input.
double erfcx(double x);

/// log(erfcx(x)) without intermediate overflow; finite for every finite x.
double log_erfcx(double x);

}  // namespace ebard
