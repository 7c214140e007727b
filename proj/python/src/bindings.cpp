#include "grcox/calibration.hpp"
#include "grcox/commands.hpp"
#include "grcox/config.hpp"
#include "grcox/cox.hpp"
#include "grcox/designs.hpp"
#include "grcox/errors.hpp"
#include "grcox/estimators.hpp"
#include "grcox/metrics.hpp"
#include "grcox/simulation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>
#include <sstream>

namespace py = pybind11;
using namespace grcox;

namespace {

// 1-D arrays become a single column.
Matrix as_matrix(const py::handle& obj, const char* name) {
  auto a = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(obj);
  if (!a) throw SchemaError(std::string(name) + ": expected a numeric array");
  if (a.ndim() == 1) {
    Matrix m(a.shape(0), 1);
    for (py::ssize_t i = 0; i < a.shape(0); ++i) m(i, 0) = a.at(i);
    return m;
  }
  if (a.ndim() != 2) throw DimensionError(std::string(name) + ": expected a 1-D or 2-D array");
  Matrix m(a.shape(0), a.shape(1));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = a.at(i, j);
  }
  return m;
}

Vector as_vector(const py::handle& obj, const char* name) {
  const Matrix m = as_matrix(obj, name);
  if (m.cols() != 1) throw DimensionError(std::string(name) + ": expected a 1-D array");
  return m.col(0);
}

Cohort cohort_from(const py::dict& d) {
  auto need = [&](const char* k) -> py::handle {
    if (!d.contains(k)) throw SchemaError(std::string("cohort: missing '") + k + "'");
    return d[k];
  };
  Cohort c;
  c.x_star = as_matrix(need("x_star"), "x_star");
  c.z = as_matrix(need("z"), "z");
  c.u_star = as_vector(need("u_star"), "u_star");
  c.delta_star = as_vector(need("delta_star"), "delta_star");
  const int truth = d.contains("x") + d.contains("u") + d.contains("delta");
  if (truth != 0 && truth != 3) throw SchemaError("cohort: give all of x, u and delta or none");
  if (truth == 3) {
    c.x_true = as_matrix(d["x"], "x");
    c.u_true = as_vector(d["u"], "u");
    c.delta_true = as_vector(d["delta"], "delta");
  }
  c.validate();
  return c;
}

py::dict cohort_to(const Cohort& c) {
  py::dict d;
  d["x_star"] = c.x_star;
  d["z"] = c.z;
  d["u_star"] = c.u_star;
  d["delta_star"] = c.delta_star;
  if (c.has_truth()) {
    d["x"] = *c.x_true;
    d["u"] = *c.u_true;
    d["delta"] = *c.delta_true;
  }
  return d;
}

TwoPhaseSample sample_from(const py::handle& r, const py::handle& pi) {
  TwoPhaseSample s;
  const Vector rv = as_vector(r, "r");
  s.r = Eigen::VectorXi(rv.size());
  for (Eigen::Index i = 0; i < rv.size(); ++i) {
    if (rv[i] != 0.0 && rv[i] != 1.0) throw SchemaError("r: entries must be 0 or 1");
    s.r[i] = static_cast<int>(rv[i]);
  }
  s.pi = as_vector(pi, "pi");
  s.design.kind = DesignKind::External;
  return s;
}

py::dict misclass_dict(const MisclassificationMetrics& m) {
  py::dict d;
  d["sens"] = m.sens;
  d["spec"] = m.spec;
  d["ppv"] = m.ppv;
  d["npv"] = m.npv;
  d["tp"] = m.tp;
  d["fp"] = m.fp;
  d["tn"] = m.tn;
  d["fn"] = m.fn;
  return d;
}

py::dict generate(Eigen::Index n_subjects, double censoring, double beta_x, double beta_z, double lambda0,
                  int scenario, const std::string& misclassification, const std::string& calibration,
                  bool no_error, std::uint64_t seed, int replicate) {
  ScenarioConfig cfg;
  cfg.n_subjects = n_subjects;
  cfg.censor_rate = censoring;
  cfg.beta_x = beta_x;
  cfg.beta_z = beta_z;
  cfg.lambda0 = lambda0;
  cfg.error_scenario = scenario;
  cfg.misclass = misclass_model_from_string(misclassification);
  cfg.censoring_calibration = censoring_calibration_from_string(calibration);
  cfg.no_error = no_error;
  cfg.seed = seed;
  cfg.n_validated = 1;
  cfg.validate();
  const double bound = censoring_bound_for(cfg);
  const RngStream base(seed, static_cast<std::uint64_t>(replicate));
  RngStream cohort_rng = base.substream(1);
  const Cohort truth = generate_cohort(cfg, bound, cohort_rng);
  RngStream error_rng = base.substream(2);
  const Cohort c = no_error ? truth : apply_error_scenario(truth, scenario, cfg.misclass, beta_x, error_rng);
  py::dict d = cohort_to(c);
  d["censor_bound"] = bound;
  return d;
}

py::dict design(const py::dict& cohort, const std::string& kind, Eigen::Index n, std::uint64_t seed, int replicate,
                double cc_ratio, const std::vector<double>& cutpoint_quantiles,
                const std::optional<std::vector<double>>& cutpoints, int strat_column, int influence_column) {
  const Cohort c = cohort_from(cohort);
  DesignSpec spec;
  spec.kind = design_kind_from_string(kind);
  spec.n_target = n;
  spec.cc_ratio = cc_ratio;
  spec.cutpoint_quantiles = cutpoint_quantiles;
  spec.cutpoints = cutpoints;
  spec.strat_column = strat_column;
  spec.influence_column = influence_column;
  spec.validate(c.size());
  RngStream rng = RngStream(seed, static_cast<std::uint64_t>(replicate)).substream(3);
  const TwoPhaseSample s = draw_design(c, spec, rng);
  py::dict d;
  d["r"] = Eigen::VectorXi(s.r);
  d["pi"] = s.pi;
  if (s.design.stratum.size() == s.size()) d["stratum"] = s.design.stratum;
  d["stratum_sizes"] = s.design.stratum_sizes;
  d["stratum_sampled"] = s.design.stratum_sampled;
  d["warnings"] = s.design.warnings;
  return d;
}

py::list estimate(const py::dict& cohort, const py::handle& r, const py::handle& pi,
                  const std::vector<std::string>& methods, std::uint64_t seed, int replicate, int imputations,
                  int fcs_iterations, const std::string& fcs_variables, bool intercept_calibration) {
  const Cohort c = cohort_from(cohort);
  const TwoPhaseSample s = sample_from(r, pi);
  s.validate(c.size(), c.p() + c.q() + 2);
  for (const auto& m : methods) {
    if (!is_known_method(m)) throw SchemaError("unknown method '" + m + "'");
  }
  EstimationOptions eo;
  eo.m_count = imputations;
  eo.l_count = fcs_iterations;
  eo.intercept_calibration = intercept_calibration;
  if (fcs_variables == "delta") {
    eo.fcs_vars = FcsVariables::Delta;
  } else if (fcs_variables == "delta-u") {
    eo.fcs_vars = FcsVariables::DeltaU;
  } else if (fcs_variables == "delta-u-x") {
    eo.fcs_vars = FcsVariables::DeltaUX;
  } else {
    throw SchemaError("fcs_variables must be delta, delta-u or delta-u-x");
  }
  std::vector<MethodOutcome> outs;
  {
    py::gil_scoped_release release;
    outs = estimate_methods(c, s, methods, eo, RngStream(seed, static_cast<std::uint64_t>(replicate)).substream(4));
  }
  py::list result;
  for (const auto& o : outs) {
    py::dict d;
    d["method"] = o.method;
    d["ok"] = o.ok;
    d["beta"] = o.beta;
    d["se"] = o.se;
    d["covariance"] = o.covariance;
    d["error"] = o.error;
    d["warnings"] = o.warnings;
    d["calib_residual"] = o.max_calib_residual;
    result.append(d);
  }
  return result;
}

py::dict cox(const py::handle& covariates, const py::handle& time, const py::handle& event,
             const std::optional<py::handle>& weights) {
  const Matrix x = as_matrix(covariates, "covariates");
  const Vector t = as_vector(time, "time");
  const Vector e = as_vector(event, "event");
  const Vector w = weights && !weights->is_none() ? as_vector(*weights, "weights") : Vector(Vector::Ones(t.size()));
  const CoxData data{x, t, e, w};
  const CoxFit fit = fit_cox(data);
  py::dict d;
  d["beta"] = fit.beta;
  d["information"] = fit.information;
  d["covariance"] = invert_spd(fit.information);
  d["loglik"] = fit.loglik;
  d["converged"] = fit.converged;
  d["iterations"] = fit.iterations;
  d["dfbeta"] = fit.converged ? dfbeta(fit, data).dfbeta : Matrix();
  return d;
}

py::dict raking(const py::handle& aux, const py::handle& r, const py::handle& pi, bool intercept) {
  AuxiliaryMatrix a(as_matrix(aux, "aux"), AuxiliarySource::User);
  if (intercept) a = a.with_intercept();
  const TwoPhaseSample s = sample_from(r, pi);
  const RakingWeights rw = solve_raking_weights(a, s);
  py::dict d;
  d["g"] = rw.g;
  d["weights"] = Vector(rw.g.cwiseQuotient(s.pi));
  d["lambda"] = rw.lambda;
  d["calib_residual"] = rw.calib_residual;
  d["iterations"] = rw.iterations;
  return d;
}

py::list simulate(const std::string& config_json, int threads, const std::optional<std::string>& profile) {
  const SimulationPlan plan = parse_simulation_config(Json::parse(config_json), profile);
  std::vector<CellResult> cells;
  {
    py::gil_scoped_release release;
    cells = run_plan(plan, threads);
  }
  py::list out;
  for (const auto& c : cells) {
    py::dict cell;
    cell["scenario"] = c.config.error_scenario;
    cell["censoring"] = c.config.censor_rate;
    cell["beta_x"] = c.config.beta_x;
    cell["design"] = to_string(c.config.design.kind);
    cell["censor_bound"] = c.censor_bound;
    cell["realized_censoring"] = c.result.metrics.censoring_rate;
    py::dict metrics;
    for (const auto& m : c.result.metrics.methods) {
      py::dict row;
      row["pct_bias"] = m.pct_bias;
      row["bias_is_absolute"] = m.bias_is_absolute;
      row["ese"] = m.ese;
      row["re"] = m.re;
      row["ase"] = m.ase;
      row["mse"] = m.mse;
      row["cp"] = m.cp;
      row["type1"] = m.type1;
      row["fail_rate"] = m.fail_rate;
      metrics[py::str(m.method)] = row;
    }
    cell["metrics"] = metrics;
    cell["misclassification"] = misclass_dict(c.result.metrics.misclass);
    std::ostringstream os;
    write_replicates_csv(os, {c});
    cell["replicates_csv"] = os.str();
    cell["warnings"] = c.result.metrics.warnings;
    out.append(cell);
  }
  return out;
}

std::string parse_config(const std::string& config_json, const std::optional<std::string>& profile) {
  Json j;
  try {
    j = Json::parse(config_json);
  } catch (const Json::parse_error& e) {
    throw SchemaError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_simulation_config(j, profile).echo.dump();
}

}  // namespace

PYBIND11_MODULE(_grcox, m) {
  m.doc() = "Generalized raking for Cox regression under two-phase sampling";
  m.attr("__version__") = GRCOX_VERSION;

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<SchemaError> input(m, "InputError", PyExc_ValueError);
  static py::exception<CalibrationFailure> calib(m, "CalibrationFailure", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const CalibrationFailure& e) {
      PyErr_SetString(calib.ptr(), e.what());
    } catch (const SchemaError& e) {
      PyErr_SetString(input.ptr(), e.what());
    } catch (const ParameterError& e) {
      PyErr_SetString(input.ptr(), e.what());
    } catch (const DimensionError& e) {
      PyErr_SetString(input.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(base.ptr(), e.what());
    }
  });

  m.def("known_methods", &known_methods);

  m.def("censoring_bound",
        [](double beta_x, double beta_z, double lambda0, double target, const std::string& mode, std::uint64_t seed) {
          if (mode == "exact") return calibrate_censoring_bound(beta_x, beta_z, lambda0, target, seed);
          if (mode == "mean-hazard") return mean_hazard_censoring_bound(beta_x, beta_z, lambda0, target);
          throw SchemaError("mode must be exact or mean-hazard");
        },
        py::arg("beta_x"), py::arg("beta_z"), py::arg("lambda0"), py::arg("target"), py::arg("mode") = "exact",
        py::arg("seed") = 20240101);

  m.def("generate_cohort", &generate, py::arg("n_subjects") = 2000, py::arg("censoring") = 0.5,
        py::arg("beta_x") = std::log(1.5), py::arg("beta_z") = std::log(0.5), py::arg("lambda0") = 0.1,
        py::arg("scenario") = 1, py::arg("misclassification") = "main", py::arg("calibration") = "exact",
        py::arg("no_error") = false, py::arg("seed") = 20240101, py::arg("replicate") = 0,
        "Simulated cohort with truth and error-prone columns, drawn from the streams of one replicate.");

  m.def("draw_design", &design, py::arg("cohort"), py::arg("kind"), py::arg("n"), py::arg("seed") = 0,
        py::arg("replicate") = 0, py::arg("cc_ratio") = 1.0,
        py::arg("cutpoint_quantiles") = std::vector<double>{0.2, 0.5, 0.8}, py::arg("cutpoints") = py::none(),
        py::arg("strat_column") = 0, py::arg("influence_column") = 0);

  m.def("estimate", &estimate, py::arg("cohort"), py::arg("r"), py::arg("pi"), py::arg("methods"),
        py::arg("seed") = 0, py::arg("replicate") = 0, py::arg("imputations") = 10, py::arg("fcs_iterations") = 50,
        py::arg("fcs_variables") = "delta-u-x", py::arg("intercept_calibration") = true);

  m.def("fit_cox", &cox, py::arg("covariates"), py::arg("time"), py::arg("event"), py::arg("weights") = py::none(),
        "Breslow Cox fit with optional case weights.");

  m.def("raking_weights", &raking, py::arg("aux"), py::arg("r"), py::arg("pi"), py::arg("intercept") = true);

  m.def("misclassification",
        [](const py::handle& truth, const py::handle& star) {
          return misclass_dict(misclassification_metrics(as_vector(truth, "truth"), as_vector(star, "star")));
        },
        py::arg("truth"), py::arg("star"));

  m.def("simulate", &simulate, py::arg("config"), py::arg("threads") = 1, py::arg("profile") = py::none(),
        "Runs every cell of a JSON config and returns per-cell metrics.");

  m.def("parse_config", &parse_config, py::arg("config"), py::arg("profile") = py::none(),
        "Validated config with defaults filled in, as JSON text.");
}
