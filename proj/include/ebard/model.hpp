#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ebard {

/// Random engine used by every sampler in the library.
using Rng = std::mt19937_64;

/// Regression data: design matrix (n x m) and response (n).
class Dataset {
 public:
  /// Validates shapes and finiteness; throws IngestionError.
  Dataset(Eigen::MatrixXd design, Eigen::VectorXd response);

  const Eigen::MatrixXd& design() const noexcept { return design_; }
  const Eigen::VectorXd& response() const noexcept { return response_; }
  Eigen::Index n() const noexcept { return design_.rows(); }
  Eigen::Index m() const noexcept { return design_.cols(); }

 private:
  Eigen::MatrixXd design_;
  Eigen::VectorXd response_;
};

enum class DatasetFormat { Csv, Json };

/// Reads a dataset. CSV: one observation per line, last column is the
/// response. JSON: {"design": [[...], ...], "response": [...]}.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);

/// Picks the format from the file extension (".json" -> Json, else Csv).
Dataset load_dataset(const std::filesystem::path& path);

Dataset parse_dataset_csv(std::string_view text);
Dataset parse_dataset_json(std::string_view text);

/// Writes design columns followed by the response column, one row per line.
std::string format_dataset_csv(const Dataset& data);

enum class RegularizerKind { Ridge, Lasso, GroupLasso, Custom };

std::string_view to_string(RegularizerKind kind);
/// Accepts "ridge", "lasso", "group-lasso" (also "group_lasso").
RegularizerKind parse_regularizer_kind(std::string_view name);

/// Per-coordinate second moment of p0(w) ~ exp(-h(w)) for the built-in
/// regularizers: ridge 1, lasso 2, group lasso m + 1.
double builtin_sigma_w_sq(RegularizerKind kind, Eigen::Index m);

/// User supplied homogeneous regularizer.
struct CustomRegularizer {
  std::function<double(std::span<const double>)> h;
  bool sign_invariant = false;
  bool permutation_invariant = false;
  /// Optional exact sampler for p0(w) ~ exp(-h(w)); fills the span.
  std::function<void(Rng&, std::span<double>)> sampler;
};

/// The regularizer h of the prior p(w | lambda) ~ exp(-lambda h(w)).
class RegularizerSpec {
 public:
  static RegularizerSpec ridge();
  static RegularizerSpec lasso();
  static RegularizerSpec group_lasso();
  static RegularizerSpec builtin(RegularizerKind kind);

  /// Validates absolute homogeneity h(a w) = |a|^kappa h(w) on 100 random
  /// probes of dimension `probe_dim`; throws DomainError on violation.
  /// `sigma_w_sq` is the measured per-coordinate second moment of p0, if known
  /// (see quad_moments).
  static RegularizerSpec custom(CustomRegularizer regularizer, double kappa,
                                Eigen::Index probe_dim,
                                std::optional<double> sigma_w_sq = std::nullopt,
                                std::uint64_t probe_seed = 0x5eed);

  RegularizerKind kind() const noexcept { return kind_; }
  double kappa() const noexcept { return kappa_; }

  /// Built-ins: builtin_sigma_w_sq(kind, m). Custom: the measured value;
  /// throws PreconditionError when it was never supplied.
  double sigma_w_sq(Eigen::Index m) const;
  bool has_sigma_w_sq() const noexcept;

  /// Evaluates h(w).
  double h(std::span<const double> w) const;

  bool sign_invariant() const noexcept;
  bool permutation_invariant() const noexcept;

  /// Custom regularizer payload, if any.
  const CustomRegularizer* custom_regularizer() const noexcept {
    return custom_ ? &*custom_ : nullptr;
  }

  /// Same regularizer with a measured second moment attached.
  RegularizerSpec with_sigma_w_sq(double sigma_w_sq) const;

 private:
  RegularizerSpec(RegularizerKind kind, double kappa) : kind_(kind), kappa_(kappa) {}

  RegularizerKind kind_;
  double kappa_;
  std::optional<double> sigma_w_sq_;
  std::optional<CustomRegularizer> custom_;
};

/// Largest |h(a w) - |a|^kappa h(w)| / (1 + |h(w)|) over random probes.
double homogeneity_defect(const std::function<double(std::span<const double>)>& h,
                          double kappa, Eigen::Index dim, int probes, std::uint64_t seed);

/// A partition of the feature indices {0, ..., m-1} into disjoint groups.
class GroupStructure {
 public:
  /// Throws StructureError on overlap, out-of-range or missing indices.
  GroupStructure(std::vector<std::vector<Eigen::Index>> groups, Eigen::Index m);

  const std::vector<std::vector<Eigen::Index>>& groups() const noexcept { return groups_; }
  std::size_t size() const noexcept { return groups_.size(); }
  Eigen::Index m() const noexcept { return m_; }

 private:
  std::vector<std::vector<Eigen::Index>> groups_;
  Eigen::Index m_;
};

/// Reads {"groups": [[0, 1], [2, 3, 4]]} (0-based feature indices).
GroupStructure load_groups(const std::filesystem::path& path, Eigen::Index m);

/// Sufficient statistic of a whitened problem: y_tilde = Phi^T y / sqrt(n),
/// where Phi^T Phi = n I. `n` is the Gram scale; it equals the row count for a
/// design produced by whiten().
class WhitenedProblem {
 public:
  WhitenedProblem(Eigen::VectorXd y_tilde, double n);

  const Eigen::VectorXd& y_tilde() const noexcept { return y_tilde_; }
  double n() const noexcept { return n_; }
  Eigen::Index m() const noexcept { return y_tilde_.size(); }
  double y_tilde_norm_sq() const noexcept { return y_tilde_.squaredNorm(); }

 private:
  Eigen::VectorXd y_tilde_;
  double n_;
};

}  // namespace ebard
