#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ebard {

struct VerifyOptions {
  /// Smaller grids and problem counts; finishes in a few seconds.
  bool quick = false;
  /// Empty, or "erfcx-first-order": the closed forms run with erfcx replaced
  /// by its first-order approximations (negative control).
  std::string inject_fault;
  std::uint64_t seed = 2024;
};

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed;
  double measured;
  double threshold;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool passed() const;
  /// {"passed": ..., "checks": [{"suite", "name", "passed", "measured", "threshold"}, ...]}
  std::string to_json() const;
};

/// Runs the oracle-equivalence, moment, asymptote and quasiconcavity suites.
/// Throws DomainError for an unknown fault name.
VerifyReport run_verification(const VerifyOptions& options = {});

/// Number of sign changes of the successive differences of `values`, ignoring
/// differences below `flat` (relative to 1 + |value|).
int slope_sign_changes(const std::vector<double>& values, double flat = 1e-12);

}  // namespace ebard
