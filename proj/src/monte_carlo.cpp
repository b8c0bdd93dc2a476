#include "ebard/monte_carlo.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include "ebard/errors.hpp"

namespace ebard {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng block_engine(std::uint64_t seed, std::uint64_t block) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(block + 0x632be59bd9b4e019ULL)));
}

void draw(const RegularizerSpec& spec, Rng& rng, std::span<double> w) {
  switch (spec.kind()) {
    case RegularizerKind::Ridge: {
      std::normal_distribution<double> normal;
      for (auto& x : w) x = normal(rng);
      return;
    }
    case RegularizerKind::Lasso: {
      std::exponential_distribution<double> expo(1.0);
      std::bernoulli_distribution coin(0.5);
      for (auto& x : w) {
        const double mag = expo(rng);
        x = coin(rng) ? mag : -mag;
      }
      return;
    }
    case RegularizerKind::GroupLasso: {
      std::normal_distribution<double> normal;
      std::gamma_distribution<double> radius(static_cast<double>(w.size()), 1.0);
      double norm_sq = 0.0;
      for (auto& x : w) {
        x = normal(rng);
        norm_sq += x * x;
      }
      const double r = radius(rng) / std::sqrt(norm_sq);
      for (auto& x : w) x *= r;
      return;
    }
    case RegularizerKind::Custom: {
      const auto* custom = spec.custom_regularizer();
      custom->sampler(rng, w);
      return;
    }
  }
}

void require_sampler(const RegularizerSpec& spec) {
  if (spec.kind() == RegularizerKind::Custom && !spec.custom_regularizer()->sampler) {
    throw PreconditionError("custom regularizer has no prior sampler; Monte Carlo needs one");
  }
}

// Log-sum-exp partials of one block for one grid point.
struct Partial {
  double max = -std::numeric_limits<double>::infinity();
  double s1 = 0.0;  // sum exp(e - max)
  double s2 = 0.0;  // sum exp(2 (e - max))
};

// Sufficient statistics of the likelihood ratio: for weights w,
// log[Z-integrand / Z_inf] = s alpha - s^2 beta / 2 with alpha = w.b, beta = w'Gw.
struct Problem {
  Eigen::VectorXd b;  // Phi^T y
  Eigen::MatrixXd gram;
  bool isotropic;  // gram = c I
  double c;
};

struct Accumulated {
  std::vector<MCEstimate> points;
  double second_moment;  // mean of w_j^2 over samples and coordinates
};

Accumulated run(const Problem& prob, const RegularizerSpec& spec, const std::vector<double>& grid,
                const MCConfig& config) {
  config.validate();
  require_sampler(spec);
  for (double lambda : grid) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw DomainError("Monte Carlo: lambda must be positive and finite");
    }
  }
  if (grid.empty()) throw DomainError("Monte Carlo: empty lambda grid");

  const Eigen::Index m = prob.b.size();
  const std::size_t g = grid.size();
  std::vector<double> scale(g);
  for (std::size_t i = 0; i < g; ++i) scale[i] = std::pow(grid[i], -1.0 / spec.kappa());

  const std::uint64_t n = config.samples;
  const std::uint64_t blocks = (n + kMCBlockSize - 1) / kMCBlockSize;
  const std::uint64_t blocks_per_chunk =
      std::max<std::uint64_t>(1, (config.chunk_size + kMCBlockSize - 1) / kMCBlockSize);
  std::vector<Partial> partials(blocks * g);
  std::vector<double> moments(blocks, 0.0);

  auto do_block = [&](std::uint64_t blk, std::vector<double>& w, std::vector<double>& alpha,
                      std::vector<double>& beta) {
    Rng rng = block_engine(config.seed, blk);
    const std::uint64_t begin = blk * kMCBlockSize;
    const std::size_t count = static_cast<std::size_t>(std::min<std::uint64_t>(kMCBlockSize, n - begin));
    double mom = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      draw(spec, rng, w);
      const Eigen::Map<const Eigen::VectorXd> wv(w.data(), m);
      alpha[k] = wv.dot(prob.b);
      const double sq = wv.squaredNorm();
      beta[k] = prob.isotropic ? prob.c * sq : wv.dot(prob.gram * wv);
      mom += sq;
    }
    moments[blk] = mom;
    for (std::size_t i = 0; i < g; ++i) {
      const double s = scale[i];
      Partial p;
      for (std::size_t k = 0; k < count; ++k) {
        p.max = std::max(p.max, s * alpha[k] - 0.5 * s * s * beta[k]);
      }
      for (std::size_t k = 0; k < count; ++k) {
        const double d = std::exp(s * alpha[k] - 0.5 * s * s * beta[k] - p.max);
        p.s1 += d;
        p.s2 += d * d;
      }
      partials[blk * g + i] = p;
    }
  };

  std::atomic<std::uint64_t> next{0};
  auto worker = [&]() {
    std::vector<double> w(static_cast<std::size_t>(m));
    std::vector<double> alpha(kMCBlockSize);
    std::vector<double> beta(kMCBlockSize);
    while (true) {
      const std::uint64_t first = next.fetch_add(blocks_per_chunk);
      if (first >= blocks) break;
      const std::uint64_t last = std::min(blocks, first + blocks_per_chunk);
      for (std::uint64_t blk = first; blk < last; ++blk) do_block(blk, w, alpha, beta);
    }
  };

  unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, (blocks + blocks_per_chunk - 1) / blocks_per_chunk));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    // exceptions inside workers would terminate; draw() only throws from user samplers
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&]() {
        try {
          worker();
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(blocks);
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  // Fixed block order reduction.
  Accumulated out;
  out.points.reserve(g);
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < g; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::uint64_t blk = 0; blk < blocks; ++blk) top = std::max(top, partials[blk * g + i].max);
    if (!std::isfinite(top)) {
      throw ConvergenceError("Monte Carlo: every exponent is -inf or NaN", top,
                             std::numeric_limits<double>::infinity());
    }
    double s1 = 0.0;
    double s2 = 0.0;
    for (std::uint64_t blk = 0; blk < blocks; ++blk) {
      const Partial& p = partials[blk * g + i];
      const double f = std::exp(p.max - top);
      s1 += p.s1 * f;
      s2 += p.s2 * f * f;
    }
    const double rel_var = std::max(0.0, s2 * nd / (s1 * s1) - 1.0);
    out.points.push_back({top + std::log(s1 / nd), std::sqrt(rel_var / nd), n, config.seed});
  }
  double mom = 0.0;
  for (double v : moments) mom += v;
  out.second_moment = mom / (nd * static_cast<double>(m));
  return out;
}

Problem from_dataset(const Dataset& data) {
  Problem p{data.design().transpose() * data.response(), data.design().transpose() * data.design(),
            false, 0.0};
  return p;
}

Problem from_whitened(const WhitenedProblem& problem) {
  const Eigen::Index m = problem.m();
  return {std::sqrt(problem.n()) * problem.y_tilde(),
          problem.n() * Eigen::MatrixXd::Identity(m, m), true, problem.n()};
}

double log_z_inf(const Dataset& data) {
  return -0.5 * data.response().squaredNorm() -
         0.5 * static_cast<double>(data.n()) * std::log(2.0 * std::numbers::pi);
}

// The asymptote needs sigma_w^2; custom priors without one use the sample value.
RegularizerSpec with_sigma(const RegularizerSpec& spec, double sample_second_moment) {
  if (spec.kind() == RegularizerKind::Custom && !spec.has_sigma_w_sq()) {
    return spec.with_sigma_w_sq(sample_second_moment);
  }
  return spec;
}

EvidenceCurve to_curve(const Accumulated& acc, const std::vector<double>& grid, double offset,
                       Asymptote asym) {
  EvidenceCurve curve{{}, asym};
  curve.points.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    curve.points.push_back(
        {grid[i], acc.points[i].log_z + offset, EvidenceBranch::MC, acc.points[i].std_error_log});
  }
  return curve;
}

}  // namespace

void MCConfig::validate() const {
  if (samples < 1) throw DomainError("Monte Carlo: need at least one sample");
  if (chunk_size < 1 || chunk_size > samples) {
    throw DomainError("Monte Carlo: chunk_size must lie in [1, samples]");
  }
}

Eigen::MatrixXd sample_prior(const RegularizerSpec& spec, Eigen::Index m, std::uint64_t count,
                             std::uint64_t seed) {
  if (m < 1) throw DomainError("sample_prior: m must be positive");
  require_sampler(spec);
  Eigen::MatrixXd out(m, static_cast<Eigen::Index>(count));
  const std::uint64_t blocks = (count + kMCBlockSize - 1) / kMCBlockSize;
  for (std::uint64_t blk = 0; blk < blocks; ++blk) {
    Rng rng = block_engine(seed, blk);
    const std::uint64_t begin = blk * kMCBlockSize;
    const std::uint64_t end = std::min(count, begin + kMCBlockSize);
    for (std::uint64_t k = begin; k < end; ++k) {
      draw(spec, rng, std::span<double>(out.col(static_cast<Eigen::Index>(k)).data(),
                                        static_cast<std::size_t>(m)));
    }
  }
  return out;
}

MCEstimate mc_log_z(const Dataset& data, const RegularizerSpec& spec, double lambda,
                    const MCConfig& config) {
  MCEstimate e = run(from_dataset(data), spec, {lambda}, config).points.front();
  e.log_z += log_z_inf(data);
  return e;
}

MCEstimate mc_log_z(const WhitenedProblem& problem, const RegularizerSpec& spec, double lambda,
                    const MCConfig& config) {
  return run(from_whitened(problem), spec, {lambda}, config).points.front();
}

EvidenceCurve mc_curve(const Dataset& data, const RegularizerSpec& spec,
                       const std::vector<double>& grid, const MCConfig& config) {
  const Accumulated acc = run(from_dataset(data), spec, grid, config);
  return to_curve(acc, grid, log_z_inf(data), asymptote(data, with_sigma(spec, acc.second_moment)));
}

EvidenceCurve mc_curve(const WhitenedProblem& problem, const RegularizerSpec& spec,
                       const std::vector<double>& grid, const MCConfig& config) {
  const Accumulated acc = run(from_whitened(problem), spec, grid, config);
  return to_curve(acc, grid, 0.0, asymptote(problem, with_sigma(spec, acc.second_moment)));
}

}  // namespace ebard
