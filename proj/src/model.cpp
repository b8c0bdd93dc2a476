#include "ebard/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ebard/errors.hpp"

namespace ebard {
namespace {

std::string cell_name(std::size_t row, std::size_t col) {
  return "row " + std::to_string(row + 1) + ", column " + std::to_string(col + 1);
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_cell(std::string_view field, std::size_t row, std::size_t col) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw IngestionError("cannot parse '" + std::string(field) + "' as a number at " +
                         cell_name(row, col));
  }
  if (!std::isfinite(value)) {
    throw IngestionError("non-finite value '" + std::string(field) + "' at " +
                         cell_name(row, col));
  }
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IngestionError("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Dataset from_rows(const std::vector<std::vector<double>>& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto cols = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd design(n, cols - 1);
  Eigen::VectorXd response(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j + 1 < cols; ++j) design(i, j) = rows[i][j];
    response(i) = rows[i][cols - 1];
  }
  return Dataset(std::move(design), std::move(response));
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset::Dataset(Eigen::MatrixXd design, Eigen::VectorXd response)
    : design_(std::move(design)), response_(std::move(response)) {
  if (design_.rows() < 1 || design_.cols() < 1) {
    throw IngestionError("dataset needs at least one row and one feature column");
  }
  if (design_.rows() != response_.size()) {
    throw IngestionError("design has " + std::to_string(design_.rows()) +
                         " rows but response has " + std::to_string(response_.size()) +
                         " entries");
  }
  for (Eigen::Index i = 0; i < design_.rows(); ++i) {
    for (Eigen::Index j = 0; j < design_.cols(); ++j) {
      if (!std::isfinite(design_(i, j))) {
        throw IngestionError("non-finite design entry at " +
                             cell_name(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
      }
    }
    if (!std::isfinite(response_(i))) {
      throw IngestionError("non-finite response at row " + std::to_string(i + 1));
    }
  }
}

Dataset parse_dataset_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    const std::size_t row = line_no++;
    if (trim(line).empty()) continue;

    std::vector<double> values;
    std::size_t col = 0;
    while (true) {
      const auto comma = line.find(',');
      values.push_back(parse_cell(line.substr(0, comma), row, col++));
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw IngestionError("ragged row " + std::to_string(row + 1) + ": expected " +
                           std::to_string(rows.front().size()) + " columns, found " +
                           std::to_string(values.size()));
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) {
    throw IngestionError("no rows");
  }
  if (rows.front().size() < 2) {
    throw IngestionError("need at least one feature column and a response column");
  }
  return from_rows(rows);
}

Dataset parse_dataset_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("design") || !doc.contains("response")) {
    throw IngestionError("JSON dataset needs \"design\" and \"response\" fields");
  }
  const auto& design = doc["design"];
  const auto& response = doc["response"];
  if (!design.is_array() || !response.is_array()) {
    throw IngestionError("\"design\" and \"response\" must be arrays");
  }
  if (design.empty()) {
    throw IngestionError("no rows");
  }
  if (design.size() != response.size()) {
    throw IngestionError("design has " + std::to_string(design.size()) +
                         " rows but response has " + std::to_string(response.size()) +
                         " entries");
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < design.size(); ++i) {
    const auto& row = design[i];
    if (!row.is_array() || row.empty()) {
      throw IngestionError("design row " + std::to_string(i + 1) + " is not a nonempty array");
    }
    if (!rows.empty() && row.size() + 1 != rows.front().size()) {
      throw IngestionError("ragged row " + std::to_string(i + 1));
    }
    std::vector<double> values;
    for (std::size_t j = 0; j <= row.size(); ++j) {
      const auto& cell = j < row.size() ? row[j] : response[i];
      if (!cell.is_number()) {
        throw IngestionError("non-numeric value at " + cell_name(i, j));
      }
      const double v = cell.get<double>();
      if (!std::isfinite(v)) {
        throw IngestionError("non-finite value at " + cell_name(i, j));
      }
      values.push_back(v);
    }
    rows.push_back(std::move(values));
  }
  return from_rows(rows);
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  const std::string text = read_file(path);
  return format == DatasetFormat::Json ? parse_dataset_json(text) : parse_dataset_csv(text);
}

Dataset load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, path.extension() == ".json" ? DatasetFormat::Json : DatasetFormat::Csv);
}

std::string format_dataset_csv(const Dataset& data) {
  std::string out;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.m(); ++j) {
      out += format_double(data.design()(i, j));
      out += ',';
    }
    out += format_double(data.response()(i));
    out += '\n';
  }
  return out;
}

std::string_view to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::Ridge:
      return "ridge";
    case RegularizerKind::Lasso:
      return "lasso";
    case RegularizerKind::GroupLasso:
      return "group-lasso";
    case RegularizerKind::Custom:
      return "custom";
  }
  return "unknown";
}

RegularizerKind parse_regularizer_kind(std::string_view name) {
  if (name == "ridge") return RegularizerKind::Ridge;
  if (name == "lasso") return RegularizerKind::Lasso;
  if (name == "group-lasso" || name == "group_lasso") return RegularizerKind::GroupLasso;
  throw DomainError("unknown regularizer '" + std::string(name) + "'");
}

double builtin_sigma_w_sq(RegularizerKind kind, Eigen::Index m) {
  if (m < 1) throw DomainError("builtin_sigma_w_sq: m must be positive");
  switch (kind) {
    case RegularizerKind::Ridge:
      return 1.0;
    case RegularizerKind::Lasso:
      return 2.0;
    case RegularizerKind::GroupLasso:
      // ||w|| ~ Gamma(m, 1), so E||w||^2 = m (m + 1), spread evenly over m coordinates.
      return static_cast<double>(m) + 1.0;
    case RegularizerKind::Custom:
      break;
  }
  throw PreconditionError(
      "custom regularizers have no built-in second moment; measure it with quad_moments");
}

RegularizerSpec RegularizerSpec::ridge() { return {RegularizerKind::Ridge, 2.0}; }
RegularizerSpec RegularizerSpec::lasso() { return {RegularizerKind::Lasso, 1.0}; }
RegularizerSpec RegularizerSpec::group_lasso() { return {RegularizerKind::GroupLasso, 1.0}; }

RegularizerSpec RegularizerSpec::builtin(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::Ridge:
      return ridge();
    case RegularizerKind::Lasso:
      return lasso();
    case RegularizerKind::GroupLasso:
      return group_lasso();
    case RegularizerKind::Custom:
      break;
  }
  throw DomainError("RegularizerSpec::builtin: custom kind has no built-in definition");
}

double homogeneity_defect(const std::function<double(std::span<const double>)>& h, double kappa,
                          Eigen::Index dim, int probes, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> scale(-3.0, 3.0);
  std::vector<double> w(static_cast<std::size_t>(dim));
  std::vector<double> aw(w.size());
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    for (auto& x : w) x = normal(rng);
    const double a = scale(rng);
    for (std::size_t i = 0; i < w.size(); ++i) aw[i] = a * w[i];
    const double hw = h(w);
    const double haw = h(aw);
    worst = std::max(worst, std::abs(haw - std::pow(std::abs(a), kappa) * hw) / (1.0 + std::abs(hw)));
  }
  return worst;
}

RegularizerSpec RegularizerSpec::custom(CustomRegularizer regularizer, double kappa,
                                        Eigen::Index probe_dim, std::optional<double> sigma_w_sq,
                                        std::uint64_t probe_seed) {
  if (!regularizer.h) throw DomainError("custom regularizer needs h");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("kappa must be positive");
  if (probe_dim < 1) throw DomainError("probe dimension must be positive");
  if (sigma_w_sq && !(*sigma_w_sq >= 0.0)) throw DomainError("sigma_w_sq must be nonnegative");
  const double defect = homogeneity_defect(regularizer.h, kappa, probe_dim, 100, probe_seed);
  if (defect > 1e-9) {
    throw DomainError("custom h is not absolutely homogeneous of degree " + std::to_string(kappa) +
                      " (defect " + std::to_string(defect) + ")");
  }
  RegularizerSpec spec(RegularizerKind::Custom, kappa);
  spec.custom_ = std::move(regularizer);
  spec.sigma_w_sq_ = sigma_w_sq;
  return spec;
}

double RegularizerSpec::sigma_w_sq(Eigen::Index m) const {
  if (sigma_w_sq_) return *sigma_w_sq_;
  return builtin_sigma_w_sq(kind_, m);
}

bool RegularizerSpec::has_sigma_w_sq() const noexcept {
  return kind_ != RegularizerKind::Custom || sigma_w_sq_.has_value();
}

double RegularizerSpec::h(std::span<const double> w) const {
  switch (kind_) {
    case RegularizerKind::Ridge: {
      double s = 0.0;
      for (double x : w) s += x * x;
      return 0.5 * s;
    }
    case RegularizerKind::Lasso: {
      double s = 0.0;
      for (double x : w) s += std::abs(x);
      return s;
    }
    case RegularizerKind::GroupLasso: {
      double s = 0.0;
      for (double x : w) s += x * x;
      return std::sqrt(s);
    }
    case RegularizerKind::Custom:
      return custom_->h(w);
  }
  return 0.0;
}

bool RegularizerSpec::sign_invariant() const noexcept {
  return kind_ != RegularizerKind::Custom || custom_->sign_invariant;
}

bool RegularizerSpec::permutation_invariant() const noexcept {
  return kind_ != RegularizerKind::Custom || custom_->permutation_invariant;
}

RegularizerSpec RegularizerSpec::with_sigma_w_sq(double sigma_w_sq) const {
  if (!(sigma_w_sq >= 0.0)) throw DomainError("sigma_w_sq must be nonnegative");
  RegularizerSpec copy = *this;
  copy.sigma_w_sq_ = sigma_w_sq;
  return copy;
}

GroupStructure::GroupStructure(std::vector<std::vector<Eigen::Index>> groups, Eigen::Index m)
    : groups_(std::move(groups)), m_(m) {
  std::vector<int> seen(static_cast<std::size_t>(std::max<Eigen::Index>(m, 0)), 0);
  for (const auto& g : groups_) {
    if (g.empty()) throw StructureError("empty group");
    for (Eigen::Index idx : g) {
      if (idx < 0 || idx >= m) {
        throw StructureError("feature index " + std::to_string(idx) + " outside [0, " +
                             std::to_string(m) + ")");
      }
      if (seen[static_cast<std::size_t>(idx)]++) {
        throw StructureError("feature index " + std::to_string(idx) + " appears in two groups");
      }
    }
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!seen[static_cast<std::size_t>(j)]) {
      throw StructureError("feature index " + std::to_string(j) + " is not covered by any group");
    }
  }
}

GroupStructure load_groups(const std::filesystem::path& path, Eigen::Index m) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError(std::string("invalid groups JSON: ") + e.what());
  }
  std::vector<std::vector<Eigen::Index>> groups;
  try {
    const auto& list = doc.is_object() ? doc.at("groups") : doc;
    if (!list.is_array()) throw IngestionError("groups JSON must hold an array of index arrays");
    for (const auto& g : list) groups.push_back(g.get<std::vector<Eigen::Index>>());
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("groups must be arrays of integers: ") + e.what());
  }
  return GroupStructure(std::move(groups), m);
}

WhitenedProblem::WhitenedProblem(Eigen::VectorXd y_tilde, double n)
    : y_tilde_(std::move(y_tilde)), n_(n) {
  if (y_tilde_.size() < 1) throw DomainError("whitened problem needs m >= 1");
  if (!(n_ > 0.0) || !std::isfinite(n_)) throw DomainError("whitened problem needs n > 0");
  if (!y_tilde_.allFinite()) throw DomainError("y_tilde has non-finite entries");
}

}  // namespace ebard
