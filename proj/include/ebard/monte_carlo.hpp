#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ebard/evidence.hpp"
#include "ebard/model.hpp"

namespace ebard {

/// Samples are drawn in blocks of this many; block b uses its own engine
/// seeded from (seed, b), so results do not depend on scheduling.
inline constexpr std::size_t kMCBlockSize = 4096;

struct MCConfig {
  std::uint64_t samples = 200000;
  std::uint64_t seed = 0;
  /// Scheduling granularity in samples (rounded up to whole blocks).
  std::uint64_t chunk_size = kMCBlockSize;
  /// Worker threads; 0 = hardware concurrency.
  unsigned threads = 0;

  /// Throws DomainError unless samples >= 1 and 1 <= chunk_size <= samples.
  void validate() const;
};

struct MCEstimate {
  double log_z;
  double std_error_log;  ///< delta-method standard error of log_z
  std::uint64_t n_samples;
  std::uint64_t seed;
};

/// Draws from p0(w) ~ exp(-h(w)): ridge N(0, I), lasso i.i.d. Laplace(0, 1),
/// group lasso r x / ||x|| with r ~ Gamma(m, 1), x ~ N(0, I). Custom
/// regularizers need a sampler (PreconditionError otherwise). Returns m x count.
Eigen::MatrixXd sample_prior(const RegularizerSpec& spec, Eigen::Index m, std::uint64_t count,
                             std::uint64_t seed);

/// Absolute log Z(lambda) = log[(2 pi)^{-n/2} mean_k exp(-||y - l^{-1/kappa} Phi w_k||^2 / 2)]
/// for an arbitrary design.
MCEstimate mc_log_z(const Dataset& data, const RegularizerSpec& spec, double lambda,
                    const MCConfig& config);

/// Relative log(Z/Z_inf) for a whitened problem.
MCEstimate mc_log_z(const WhitenedProblem& problem, const RegularizerSpec& spec, double lambda,
                    const MCConfig& config);

/// One draw of the samples reweighted at every grid point (branch MC), with
/// the large-lambda asymptote attached.
EvidenceCurve mc_curve(const Dataset& data, const RegularizerSpec& spec,
                       const std::vector<double>& grid, const MCConfig& config);
EvidenceCurve mc_curve(const WhitenedProblem& problem, const RegularizerSpec& spec,
                       const std::vector<double>& grid, const MCConfig& config);

}  // namespace ebard
