#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ebard/errors.hpp"
#include "ebard/estimator.hpp"
#include "ebard/evidence.hpp"
#include "ebard/io.hpp"
#include "ebard/model.hpp"
#include "ebard/monte_carlo.hpp"
#include "ebard/oracle.hpp"
#include "ebard/reduction.hpp"
#include "ebard/verify.hpp"

namespace {

using namespace ebard;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitCapability = 3;
constexpr int kExitVerification = 4;

struct RunConfig {
  std::string model = "ridge";
  std::string input;
  std::string output;
  std::string grid = "1e-3,1e3,61";
  std::uint64_t samples = 200000;
  std::uint64_t seed = 0;
  double tol = 1e-10;
  std::string groups;
  std::string engine = "closed";
  unsigned threads = 0;
  bool quick = false;
  std::string inject_fault;
  std::string transform;
};

struct CapabilityError : Error {
  using Error::Error;
};

void emit(const RunConfig& cfg, const std::string& payload) {
  if (cfg.output.empty()) {
    std::cout << payload;
    if (!payload.empty() && payload.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream f(cfg.output, std::ios::binary);
  if (!f) throw IngestionError("cannot write " + cfg.output);
  f << payload;
  if (!payload.empty() && payload.back() != '\n') f << '\n';
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot write " + path);
  f << text << '\n';
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw IngestionError("--grid expects min,max,points (got '" + text + "')");
    }
  }
  if (parts.size() != 3 || !(parts[0] > 0.0) || !(parts[0] < parts[1]) || parts[2] < 2 ||
      parts[2] != std::floor(parts[2])) {
    throw IngestionError("--grid needs 0 < min < max and an integer point count >= 2");
  }
  return log_grid(parts[0], parts[1], static_cast<std::size_t>(parts[2]));
}

RegularizerSpec model_spec(const RunConfig& cfg) {
  try {
    return RegularizerSpec::builtin(parse_regularizer_kind(cfg.model));
  } catch (const Error& e) {
    throw IngestionError(e.what());
  }
}

Dataset load(const RunConfig& cfg) {
  if (cfg.input.empty()) throw IngestionError("--input is required");
  return load_dataset(cfg.input);
}

MCConfig mc_config(const RunConfig& cfg) {
  MCConfig mc;
  mc.samples = cfg.samples;
  mc.seed = cfg.seed;
  mc.chunk_size = std::min<std::uint64_t>(kMCBlockSize, cfg.samples);
  mc.threads = cfg.threads;
  return mc;
}

// Dataset used by the closed forms: the input itself when its Gram matrix is
// isotropic, otherwise its whitened version.
Dataset modeled(const Dataset& data, WhiteningReport* report) {
  if (isotropic_gram_scale(data.design())) return data;
  std::cerr << "note: design is not whitened; whitening internally\n";
  return whiten_dataset(data, report);
}

// Whitening mixes features across groups, so grouped runs need a design that
// already satisfies the whitening condition.
void require_isotropic(const Dataset& data) {
  if (!isotropic_gram_scale(data.design())) {
    throw PreconditionError("--groups needs a whitened design (Phi^T Phi = n I); run `whiten` per group first");
  }
}

double log_z_inf(const Dataset& data) {
  return asymptote(data, RegularizerSpec::ridge()).log_z_inf;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

int cmd_check_ard(const RunConfig& cfg) {
  emit(cfg, verdict_to_json(ard_gate(load(cfg))));
  return kExitOk;
}

int cmd_estimate(const RunConfig& cfg) {
  const Dataset data = load(cfg);
  const RegularizerSpec spec = model_spec(cfg);
  EstimateOptions opts;
  opts.tolerance = cfg.tol;
  opts.mc = mc_config(cfg);

  if (cfg.groups.empty()) {
    const LambdaEstimate est = estimate_lambda(data, spec, opts);
    WhiteningReport report;
    const Dataset used = modeled(data, &report);
    Eigen::VectorXd w = map_weights(reduce(used), spec, est.lambda());
    if (est.transform) w = *est.transform * w;  // back to the original coordinates
    emit(cfg, estimate_to_json(est, w));
    return kExitOk;
  }

  if (spec.kind() != RegularizerKind::GroupLasso) {
    throw IngestionError("--groups applies to --model group-lasso only");
  }
  const GroupStructure groups = load_groups(cfg.groups, data.m());
  require_isotropic(data);
  nlohmann::ordered_json out;
  out["groups"] = nlohmann::ordered_json::array();
  for (const auto& [indices, sub] : decompose_by_groups(data, groups)) {
    const LambdaEstimate est = estimate_lambda(sub, spec, opts);
    const Eigen::VectorXd w = map_weights(sub, spec, est.lambda());
    auto j = nlohmann::ordered_json::parse(estimate_to_json(est, w));
    nlohmann::ordered_json entry;
    entry["indices"] = indices;
    for (auto it = j.begin(); it != j.end(); ++it) entry[it.key()] = it.value();
    out["groups"].push_back(entry);
  }
  emit(cfg, out.dump());
  return kExitOk;
}

EvidenceCurve closed_or_oracle_curve(const WhitenedProblem& p, const RegularizerSpec& spec,
                                     const std::vector<double>& grid, bool oracle) {
  if (!oracle) {
    if (!has_closed_form(spec, p.m())) {
      throw CapabilityError("no closed form for " + std::string(to_string(spec.kind())) +
                            " with m = " + std::to_string(p.m()) +
                            "; use --engine oracle (m <= 3) or --engine mc");
    }
    return evidence_curve(p, spec, grid);
  }
  if (p.m() > 3) {
    throw CapabilityError("the quadrature oracle supports m <= 3; use --engine mc");
  }
  EvidenceCurve curve{{}, asymptote(p, spec)};
  const bool polar = spec.kind() == RegularizerKind::GroupLasso && p.m() == 3;
  for (double lambda : grid) {
    const double v = polar ? quad_log_z_polar(p, lambda).log_value
                           : quad_log_z(p, spec, lambda).log_value;
    curve.points.push_back({lambda, v, EvidenceBranch::Oracle, std::nullopt});
  }
  return curve;
}

int cmd_curve(const RunConfig& cfg, const std::string& engine) {
  const Dataset data = load(cfg);
  const RegularizerSpec spec = model_spec(cfg);
  const std::vector<double> grid = parse_grid(cfg.grid);
  EvidenceCurve curve;
  if (engine == "mc") {
    if (!cfg.groups.empty()) throw CapabilityError("--groups is not supported with --engine mc");
    curve = mc_curve(data, spec, grid, mc_config(cfg));
  } else if (engine == "closed" || engine == "oracle") {
    const bool oracle = engine == "oracle";
    WhiteningReport report;
    const Dataset used = modeled(data, &report);
    const WhitenedProblem problem = reduce(used);
    if (cfg.groups.empty()) {
      curve = closed_or_oracle_curve(problem, spec, grid, oracle);
    } else {
      if (spec.kind() != RegularizerKind::GroupLasso) {
        throw IngestionError("--groups applies to --model group-lasso only");
      }
      // The evidence factorizes over groups.
      const GroupStructure groups = load_groups(cfg.groups, data.m());
      require_isotropic(data);
      bool first = true;
      for (const auto& [indices, sub] : decompose_by_groups(problem, groups)) {
        const EvidenceCurve part = closed_or_oracle_curve(sub, spec, grid, oracle);
        if (first) {
          curve = part;
          first = false;
          continue;
        }
        for (std::size_t i = 0; i < grid.size(); ++i) {
          curve.points[i].log_z += part.points[i].log_z;
          if (part.points[i].branch == EvidenceBranch::Oracle) {
            curve.points[i].branch = EvidenceBranch::Oracle;
          }
        }
      }
      curve.asymptote = asymptote(problem, spec);
    }
    curve = shift_curve(std::move(curve), log_z_inf(used));
  } else {
    throw IngestionError("--engine must be closed, mc or oracle (got '" + engine + "')");
  }
  emit(cfg, curve_to_csv(curve));
  const std::string asym = asymptote_to_json(curve.asymptote);
  if (cfg.output.empty()) {
    std::cerr << "asymptote: " << asym << '\n';
  } else {
    write_file(cfg.output + ".asymptote.json", asym);
  }
  return kExitOk;
}

int cmd_whiten(const RunConfig& cfg) {
  const Dataset data = load(cfg);
  WhiteningReport report;
  const Dataset out = whiten_dataset(data, &report);
  emit(cfg, format_dataset_csv(out));
  if (!cfg.transform.empty()) {
    nlohmann::ordered_json j;
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < report.transform.rows(); ++i) {
      rows.push_back(to_vector(report.transform.row(i).transpose()));
    }
    j["transform"] = rows;
    j["gram_residual"] = report.gram_residual;
    write_file(cfg.transform, j.dump());
  }
  std::cerr << "gram residual " << report.gram_residual << '\n';
  return kExitOk;
}

int cmd_verify(const RunConfig& cfg) {
  VerifyOptions opts;
  opts.quick = cfg.quick;
  opts.inject_fault = cfg.inject_fault;
  const VerifyReport report = run_verification(opts);
  emit(cfg, report.to_json());
  for (const auto& c : report.checks) {
    if (!c.passed) {
      std::cerr << "FAIL " << c.suite << '/' << c.name << ": " << c.measured << " > "
                << c.threshold << '\n';
    }
  }
  return report.passed() ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical Bayes regularization strength and ARD diagnostics"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--input", cfg.input, "dataset (.csv: last column is y; .json)");
    sub->add_option("--output", cfg.output, "write the payload here instead of stdout");
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "ridge | lasso | group-lasso");
    sub->add_option("--groups", cfg.groups, "JSON {\"groups\": [[0,1],[2,3]]}, 0-based");
    sub->add_option("--tol", cfg.tol, "relative tolerance");
  };
  auto add_mc = [&](CLI::App* sub) {
    sub->add_option("--samples", cfg.samples, "Monte Carlo sample count");
    sub->add_option("--seed", cfg.seed, "Monte Carlo seed");
    sub->add_option("--threads", cfg.threads, "worker threads (0 = all cores)");
  };

  auto* check = app.add_subcommand("check-ard", "ARD gate verdict");
  add_common(check);
  auto* estimate = app.add_subcommand("estimate", "empirical Bayes lambda and MAP weights");
  add_common(estimate);
  add_model(estimate);
  add_mc(estimate);
  auto* curve = app.add_subcommand("curve", "log-evidence curve as CSV");
  add_common(curve);
  add_model(curve);
  add_mc(curve);
  curve->add_option("--grid", cfg.grid, "min,max,points (log-spaced)");
  curve->add_option("--engine", cfg.engine, "closed | mc | oracle");
  auto* mc = app.add_subcommand("mc-curve", "curve with --engine mc");
  add_common(mc);
  add_model(mc);
  add_mc(mc);
  mc->add_option("--grid", cfg.grid, "min,max,points (log-spaced)");
  auto* whiten_cmd = app.add_subcommand("whiten", "write the whitened dataset");
  add_common(whiten_cmd);
  whiten_cmd->add_option("--transform", cfg.transform, "write the m x m transform as JSON");
  auto* verify = app.add_subcommand("verify", "oracle and property checks");
  verify->add_option("--output", cfg.output, "write the JSON report here");
  verify->add_flag("--quick", cfg.quick, "reduced suite");
  verify->add_option("--inject-fault", cfg.inject_fault, "erfcx-first-order (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*check) return cmd_check_ard(cfg);
    if (*estimate) return cmd_estimate(cfg);
    if (*curve) return cmd_curve(cfg, cfg.engine);
    if (*mc) return cmd_curve(cfg, "mc");
    if (*whiten_cmd) return cmd_whiten(cfg);
    if (*verify) return cmd_verify(cfg);
  } catch (const CapabilityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCapability;
  } catch (const UnsupportedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCapability;
  } catch (const IngestionError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DomainError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const PreconditionError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const StructureError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const SingularityError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
