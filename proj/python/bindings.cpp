#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>

#include "ebard/errors.hpp"
#include "ebard/estimator.hpp"
#include "ebard/evidence.hpp"
#include "ebard/monte_carlo.hpp"
#include "ebard/oracle.hpp"
#include "ebard/reduction.hpp"
#include "ebard/special.hpp"
#include "ebard/verify.hpp"

namespace py = pybind11;
using namespace ebard;

namespace {

RegularizerSpec spec_of(const std::string& model) {
  return RegularizerSpec::builtin(parse_regularizer_kind(model));
}

MCConfig mc_config(std::uint64_t samples, std::uint64_t seed, unsigned threads) {
  MCConfig c;
  c.samples = samples;
  c.seed = seed;
  c.threads = threads;
  c.chunk_size = std::min<std::uint64_t>(kMCBlockSize, samples);
  return c;
}

py::dict verdict_dict(const ArdVerdict& v) {
  py::dict d;
  d["lhs"] = v.lhs;
  d["rhs"] = v.rhs;
  d["divergent"] = v.divergent;
  return d;
}

py::dict curve_dict(const EvidenceCurve& c) {
  std::vector<double> lambdas, values, se;
  std::vector<std::string> branches;
  for (const auto& p : c.points) {
    lambdas.push_back(p.lambda);
    values.push_back(p.log_z);
    branches.emplace_back(to_string(p.branch));
    se.push_back(p.std_error_log.value_or(std::numeric_limits<double>::quiet_NaN()));
  }
  py::dict d;
  d["lambda"] = lambdas;
  d["log_z"] = values;
  d["branch"] = branches;
  d["std_error_log"] = se;
  d["log_z_inf"] = c.asymptote.log_z_inf;
  d["second_order_coeff"] = c.asymptote.second_order_coeff;
  d["kappa"] = c.asymptote.kappa;
  return d;
}

py::dict estimate_dict(const LambdaEstimate& e, const Eigen::VectorXd& weights) {
  py::dict d;
  d["verdict"] = verdict_dict(e.verdict);
  d["divergent"] = e.divergent();
  d["lambda"] = e.lambda();
  d["bracket"] = e.bracket;
  d["log_z_at_star"] = e.log_z_at_star;
  d["iterations"] = e.iterations;
  d["map_weights"] = weights;
  if (e.transform) d["transform"] = *e.transform;
  if (e.raw_verdict) d["raw_verdict"] = verdict_dict(*e.raw_verdict);
  return d;
}

}  // namespace

PYBIND11_MODULE(_ebard, m) {
  m.doc() = "Empirical Bayes regularization strength for ridge, lasso and group lasso";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<IngestionError>(m, "IngestionError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<StructureError>(m, "StructureError", base.ptr());
  py::register_exception<SingularityError>(m, "SingularityError", base.ptr());
  py::register_exception<UnsupportedError>(m, "UnsupportedError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<QuasiconcavityViolation>(m, "QuasiconcavityViolation", base.ptr());

  m.def("erfcx", &erfcx, py::arg("x"));
  m.def("log_erfcx", &log_erfcx, py::arg("x"));

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<Eigen::MatrixXd, Eigen::VectorXd>(), py::arg("design"), py::arg("response"))
      .def_property_readonly("design", &Dataset::design)
      .def_property_readonly("response", &Dataset::response)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("m", &Dataset::m);
  m.def("load_dataset", [](const std::string& path) { return load_dataset(path); }, py::arg("path"));

  py::class_<WhitenedProblem>(m, "WhitenedProblem")
      .def(py::init<Eigen::VectorXd, double>(), py::arg("y_tilde"), py::arg("n"))
      .def_property_readonly("y_tilde", &WhitenedProblem::y_tilde)
      .def_property_readonly("n", &WhitenedProblem::n)
      .def_property_readonly("m", &WhitenedProblem::m);

  m.def("whiten",
        [](const Eigen::MatrixXd& design) {
          const auto r = whiten(design);
          return py::make_tuple(r.transformed_design, r.transform, r.gram_residual);
        },
        py::arg("design"), "(whitened design, transform, gram residual)");
  m.def("reduce", &reduce, py::arg("data"));

  m.def("log_z",
        [](const WhitenedProblem& p, const std::string& model, double lambda) {
          return log_z(p, spec_of(model), lambda).log_z;
        },
        py::arg("problem"), py::arg("model"), py::arg("lam"));
  m.def("d_log_z",
        [](const WhitenedProblem& p, const std::string& model, double lambda) {
          return d_log_z_closed(p, spec_of(model), lambda);
        },
        py::arg("problem"), py::arg("model"), py::arg("lam"));
  m.def("evidence_curve",
        [](const WhitenedProblem& p, const std::string& model, const std::vector<double>& grid) {
          return curve_dict(evidence_curve(p, spec_of(model), grid));
        },
        py::arg("problem"), py::arg("model"), py::arg("grid"));
  m.def("log_grid", &log_grid, py::arg("lo"), py::arg("hi"), py::arg("points"));

  m.def("ard_gate", py::overload_cast<const Dataset&>(&ard_gate), py::arg("data"));
  m.def("ard_gate", py::overload_cast<const WhitenedProblem&>(&ard_gate), py::arg("problem"));
  py::class_<ArdVerdict>(m, "ArdVerdict")
      .def_readonly("lhs", &ArdVerdict::lhs)
      .def_readonly("rhs", &ArdVerdict::rhs)
      .def_readonly("divergent", &ArdVerdict::divergent);

  m.def("estimate_lambda",
        [](const Dataset& data, const std::string& model, double tol) {
          const auto spec = spec_of(model);
          EstimateOptions opt;
          opt.tolerance = tol;
          const auto e = estimate_lambda(data, spec, opt);
          const Dataset used = e.transform ? whiten_dataset(data) : data;
          Eigen::VectorXd w = map_weights(reduce(used), spec, e.lambda());
          if (e.transform) w = *e.transform * w;
          return estimate_dict(e, w);
        },
        py::arg("data"), py::arg("model"), py::arg("tol") = 1e-10);
  m.def("estimate_lambda",
        [](const WhitenedProblem& p, const std::string& model, double tol) {
          const auto spec = spec_of(model);
          EstimateOptions opt;
          opt.tolerance = tol;
          const auto e = estimate_lambda(p, spec, opt);
          return estimate_dict(e, map_weights(p, spec, e.lambda()));
        },
        py::arg("problem"), py::arg("model"), py::arg("tol") = 1e-10);

  m.def("mc_log_z",
        [](const Dataset& data, const std::string& model, double lambda, std::uint64_t samples,
           std::uint64_t seed, unsigned threads) {
          const auto e = mc_log_z(data, spec_of(model), lambda, mc_config(samples, seed, threads));
          return py::make_tuple(e.log_z, e.std_error_log);
        },
        py::arg("data"), py::arg("model"), py::arg("lam"), py::arg("samples") = 200000,
        py::arg("seed") = 0, py::arg("threads") = 0, "(log Z, standard error)");
  m.def("mc_curve",
        [](const Dataset& data, const std::string& model, const std::vector<double>& grid,
           std::uint64_t samples, std::uint64_t seed, unsigned threads) {
          return curve_dict(mc_curve(data, spec_of(model), grid, mc_config(samples, seed, threads)));
        },
        py::arg("data"), py::arg("model"), py::arg("grid"), py::arg("samples") = 200000,
        py::arg("seed") = 0, py::arg("threads") = 0);

  m.def("quad_log_z",
        [](const WhitenedProblem& p, const std::string& model, double lambda, double tol) {
          return quad_log_z(p, spec_of(model), lambda, tol).log_value;
        },
        py::arg("problem"), py::arg("model"), py::arg("lam"), py::arg("tol") = kOracleTolerance);
  m.def("ridge_log_z_exact", &ridge_log_z_exact, py::arg("data"), py::arg("lam"));

  m.def("verify",
        [](bool quick, const std::string& fault) {
          VerifyOptions opt;
          opt.quick = quick;
          opt.inject_fault = fault;
          return run_verification(opt).to_json();
        },
        py::arg("quick") = true, py::arg("inject_fault") = "", "JSON report");
}
