#include "grcox/commands.hpp"

#include "grcox/csv_io.hpp"
#include "grcox/errors.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <thread>

namespace grcox {

namespace fs = std::filesystem;

namespace {

constexpr double kZ975 = 1.959963984540054;

std::string cell_prefix(const CellResult& c) {
  return std::to_string(c.config.error_scenario) + "," + format_double(c.config.censor_rate) + "," +
         format_double(c.config.beta_x) + "," + to_string(c.config.design.kind);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + p.string() + "'");
  return out;
}

void write_json(const fs::path& p, const Json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

fs::path resolve_out_dir(const std::optional<std::string>& flag) {
  if (flag) return *flag;
  if (auto env = env_out_dir()) return *env;
  throw SchemaError("no output directory: pass --out or set GRCOX_OUT_DIR");
}

int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

template <class F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const SchemaError& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParameterError& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  }
}

FcsVariables fcs_from_string(const std::string& s) {
  if (s == "delta") return FcsVariables::Delta;
  if (s == "delta-u") return FcsVariables::DeltaU;
  if (s == "delta-u-x") return FcsVariables::DeltaUX;
  throw SchemaError("unknown FCS variable set '" + s + "' (delta, delta-u, delta-u-x)");
}

void write_sample(std::ostream& out, const std::vector<std::string>& ids, const TwoPhaseSample& s) {
  out << "id,r,pi,stratum\n";
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    out << ids[static_cast<std::size_t>(i)] << ',' << s.r[i] << ',' << format_double(s.pi[i]) << ',';
    if (s.design.stratum.size() == s.size()) out << s.design.stratum[i];
    out << '\n';
  }
}

Json strata_json(const TwoPhaseSample& s) {
  Json j = Json::array();
  for (std::size_t h = 0; h < s.design.stratum_sizes.size(); ++h) {
    j.push_back({{"stratum", h},
                 {"size", s.design.stratum_sizes[h]},
                 {"sampled", h < s.design.stratum_sampled.size() ? s.design.stratum_sampled[h] : 0}});
  }
  return j;
}

Json design_json(const TwoPhaseSample& s) {
  Json j = Json::object();
  j["kind"] = to_string(s.design.kind);
  j["n_validated"] = s.n_validated();
  if (!s.design.cutpoints.empty()) j["cutpoints"] = s.design.cutpoints;
  if (!s.design.stratum_sizes.empty()) j["strata"] = strata_json(s);
  return j;
}

}  // namespace

CohortColumns export_columns() { return CohortColumns::defaults(1, 1); }

std::vector<CellResult> run_plan(const SimulationPlan& plan, int threads, std::ostream* log) {
  std::vector<CellResult> out;
  for (std::size_t k = 0; k < plan.cells.size(); ++k) {
    CellResult c;
    c.config = plan.cells[k];
    c.censor_bound = censoring_bound_for(c.config);
    if (log) {
      *log << "cell " << k + 1 << "/" << plan.cells.size() << ": scenario " << c.config.error_scenario
           << ", censoring " << c.config.censor_rate << ", beta_x " << c.config.beta_x << ", "
           << to_string(c.config.design.kind) << ", " << c.config.replicates << " replicates\n";
    }
    c.result = run_simulation(c.config, c.censor_bound, threads);
    out.push_back(std::move(c));
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const std::vector<CellResult>& cells) {
  out << "scenario,censoring,beta_x_true,design,method,pct_bias,ese,re,ase,mse,cp,type1,fail_rate\n";
  for (const auto& c : cells) {
    for (const auto& m : c.result.metrics.methods) {
      out << cell_prefix(c) << ',' << m.method << ',' << format_double(m.pct_bias) << ',' << format_double(m.ese)
          << ',' << format_double(m.re) << ',' << format_double(m.ase) << ',' << format_double(m.mse) << ','
          << format_double(m.cp) << ',' << format_double(m.type1) << ',' << format_double(m.fail_rate) << '\n';
    }
  }
}

void write_misclassification_csv(std::ostream& out, const std::vector<CellResult>& cells) {
  out << "scenario,censoring,beta_x_true,design,sens,spec,ppv,npv,realized_censoring\n";
  for (const auto& c : cells) {
    const auto& m = c.result.metrics;
    out << cell_prefix(c) << ',' << format_double(m.misclass.sens) << ',' << format_double(m.misclass.spec) << ','
        << format_double(m.misclass.ppv) << ',' << format_double(m.misclass.npv) << ','
        << format_double(m.censoring_rate) << '\n';
  }
}

void write_replicates_csv(std::ostream& out, const std::vector<CellResult>& cells) {
  out << "scenario,censoring,beta_x_true,design,replicate,method,ok,beta_x,se_x,beta_z,se_z,calib_residual,error\n";
  for (const auto& c : cells) {
    for (const auto& r : c.result.records) {
      for (const auto& o : r.outcomes) {
        auto coef = [&](const Vector& v, Eigen::Index j) { return j < v.size() ? format_double(v[j]) : std::string(); };
        std::string err = o.error;
        for (auto& ch : err) {
          if (ch == '"') ch = '\'';
          if (ch == '\n') ch = ' ';
        }
        out << cell_prefix(c) << ',' << r.index << ',' << o.method << ',' << (o.ok ? 1 : 0) << ',' << coef(o.beta, 0)
            << ',' << coef(o.se, 0) << ',' << coef(o.beta, 1) << ',' << coef(o.se, 1) << ','
            << format_double(o.max_calib_residual) << ",\"" << err << "\"\n";
      }
    }
  }
}

Json simulation_manifest(const SimulationPlan& plan, const std::vector<CellResult>& cells, int threads,
                         double seconds) {
  Json j = Json::object();
  j["tool"] = "grcox";
  j["version"] = GRCOX_VERSION;
  j["command"] = "simulate";
  j["seed"] = plan.cells.empty() ? 0 : plan.cells.front().seed;
  j["threads"] = threads;
  j["config"] = plan.echo;
  j["cells"] = Json::array();
  Json warnings = Json::array();
  for (const auto& c : cells) {
    Json cell = Json::object();
    cell["scenario"] = c.config.error_scenario;
    cell["censoring"] = c.config.censor_rate;
    cell["beta_x"] = c.config.beta_x;
    cell["design"] = design_to_json(c.config.design);
    cell["censoring_calibration"] = to_string(c.config.censoring_calibration);
    cell["censoring_bound"] = c.censor_bound;
    cell["realized_censoring"] = c.result.metrics.censoring_rate;
    Json failures = Json::object();
    for (const auto& m : c.result.metrics.methods) {
      failures[m.method] = m.failures;
      if (m.fail_rate > 0.01) {
        warnings.push_back(cell_prefix(c) + ": " + m.method + " failed in " + std::to_string(m.failures) +
                           " replicates (more than 1%)");
      }
    }
    cell["failures"] = failures;
    std::map<std::string, int> counts;
    for (const auto& r : c.result.records) {
      for (const auto& w : r.warnings) ++counts[w];
      for (const auto& o : r.outcomes) {
        for (const auto& w : o.warnings) ++counts[o.method + ": " + w];
        if (!o.ok) ++counts[o.method + " failed: " + o.error];
      }
    }
    for (const auto& w : c.result.metrics.warnings) ++counts[w];
    Json cw = Json::object();
    for (const auto& [w, k] : counts) cw[w] = k;
    cell["warnings"] = cw;
    j["cells"].push_back(cell);
  }
  j["warnings"] = warnings;
  j["wall_clock_seconds"] = seconds;
  return j;
}

int cmd_simulate(const SimulateOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    const auto start = std::chrono::steady_clock::now();
    SimulationPlan plan = parse_simulation_config(read_json_file(options.config), options.profile);
    if (options.replicates) {
      if (*options.replicates < 1) throw ParameterError("--replicates must be positive");
      for (auto& cell : plan.cells) cell.replicates = *options.replicates;
      plan.echo["replicates"] = *options.replicates;
    }
    const fs::path dir = resolve_out_dir(options.out_dir);
    const int threads = options.threads ? *options.threads : env_threads().value_or(default_threads());
    if (threads < 1) throw ParameterError("--threads must be positive");
    fs::create_directories(dir);

    const auto cells = run_plan(plan, threads, &log);
    {
      auto out = open_out(dir / "metrics.csv");
      write_metrics_csv(out, cells);
    }
    {
      auto out = open_out(dir / "misclassification.csv");
      write_misclassification_csv(out, cells);
    }
    {
      auto out = open_out(dir / "replicates.csv");
      write_replicates_csv(out, cells);
    }
    if (options.export_replicate) {
      const int k = *options.export_replicate;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const ScenarioConfig& cfg = cells[c].config;
        if (k < 0 || k >= cfg.replicates) throw ParameterError("--export-replicate outside the replicate range");
        const RngStream base(cfg.seed, static_cast<std::uint64_t>(k));
        RngStream cohort_rng = base.substream(1);
        const Cohort truth = generate_cohort(cfg, cells[c].censor_bound, cohort_rng);
        RngStream error_rng = base.substream(2);
        const Cohort cohort =
            cfg.no_error ? truth : apply_error_scenario(truth, cfg.error_scenario, cfg.misclass, cfg.beta_x, error_rng);
        RngStream design_rng = base.substream(3);
        const TwoPhaseSample sample = draw_design(cohort, cfg.design, design_rng);
        auto out = open_out(dir / ("cohort_cell" + std::to_string(c + 1) + "_rep" + std::to_string(k) + ".csv"));
        write_cohort(out, cohort, export_columns(), &sample);
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json(dir / "manifest.json", simulation_manifest(plan, cells, threads, secs));
    log << "wrote " << (dir / "metrics.csv").string() << '\n';
    return 0;
  });
}

int cmd_analyze(const AnalyzeOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    if (options.pi_column.has_value() == options.design.has_value()) {
      throw SchemaError("give exactly one of --pi-column and --design");
    }
    if (options.methods.empty()) throw SchemaError("--methods is empty");
    for (const auto& m : options.methods) {
      if (!is_known_method(m)) throw SchemaError("unknown method '" + m + "'");
    }
    if (options.m_count < 1 || options.l_count < 0) throw ParameterError("need M >= 1 and L >= 0");
    const fs::path dir = resolve_out_dir(options.out_dir);

    const Json map = read_json_file(options.map);
    CohortColumns cols = parse_column_map(map);
    if (cols.x_true.empty()) throw SchemaError("column map: analysis needs truth columns x, u and delta");
    if (options.pi_column) {
      if (cols.r.empty()) throw SchemaError("column map: --pi-column needs the validation indicator 'r'");
      cols.pi = *options.pi_column;
    } else {
      cols.pi.clear();
    }
    const CsvTable table = read_csv_file(options.data);
    // A declared design decides validation itself; any r column is ignored then.
    if (options.design) cols.r.clear();
    const CohortFile file = read_cohort(table, cols);
    const Cohort& cohort = file.cohort;
    const Eigen::Index n = cohort.size();
    const Eigen::Index pdim = cohort.p() + cohort.q();

    std::vector<double> scale(static_cast<std::size_t>(pdim), 1.0);
    if (map.contains("scale")) {
      const Json& s = map["scale"];
      if (!s.is_array() || static_cast<Eigen::Index>(s.size()) != pdim) {
        throw SchemaError("column map: 'scale' must list one number per covariate (x then z)");
      }
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (!s[j].is_number()) throw SchemaError("column map: 'scale' entries must be numbers");
        scale[j] = s[j].get<double>();
      }
    }

    TwoPhaseSample sample;
    if (options.pi_column) {
      sample.r = *file.r;
      sample.pi = *file.pi;
      sample.design.kind = DesignKind::External;
    } else {
      std::vector<std::string> issues;
      DesignSpec spec = parse_design_spec(read_json_file(*options.design), "", issues);
      if (!issues.empty()) {
        std::string msg = "design spec:";
        for (const auto& i : issues) msg += "\n  " + i;
        throw SchemaError(msg);
      }
      spec.validate(n);
      RngStream design_rng = RngStream(options.seed, static_cast<std::uint64_t>(options.replicate)).substream(3);
      sample = draw_design(cohort, spec, design_rng);
      std::string missing;
      int count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (sample.r[i] == 1 && std::isnan((*cohort.delta_true)[i])) {
          if (count++ < 10) missing += (missing.empty() ? "" : ", ") + std::to_string(i + 1);
        }
      }
      if (count > 0) {
        throw SchemaError(std::to_string(count) + " sampled rows lack truth columns (rows " + missing +
                          (count > 10 ? ", ..." : "") + ")");
      }
    }
    sample.validate(n, pdim + 2);

    EstimationOptions eo;
    eo.m_count = options.m_count;
    eo.l_count = options.l_count;
    eo.fcs_vars = fcs_from_string(options.fcs_vars);
    eo.intercept_calibration = options.intercept_calibration;
    const RngStream rng = RngStream(options.seed, static_cast<std::uint64_t>(options.replicate)).substream(4);
    const auto outcomes = estimate_methods(cohort, sample, options.methods, eo, rng);

    std::vector<std::string> names = cols.x_star;
    names.insert(names.end(), cols.z.begin(), cols.z.end());
    fs::create_directories(dir);
    {
      auto out = open_out(dir / "estimates.csv");
      out << "method,covariate,scale,beta,se,hr,ci_lower,ci_upper,ci_width,ok,error\n";
      for (const auto& o : outcomes) {
        for (Eigen::Index j = 0; j < pdim; ++j) {
          const double s = scale[static_cast<std::size_t>(j)];
          const bool have = o.ok && j < o.beta.size();
          const double b = have ? o.beta[j] : std::nan("");
          const double se = have ? o.se[j] : std::nan("");
          const double lo = std::exp(s * (b - kZ975 * se));
          const double hi = std::exp(s * (b + kZ975 * se));
          std::string err = o.error;
          for (auto& ch : err) {
            if (ch == '"') ch = '\'';
            if (ch == '\n') ch = ' ';
          }
          out << o.method << ',' << names[static_cast<std::size_t>(j)] << ',' << format_double(s) << ','
              << format_double(b) << ',' << format_double(se) << ',' << format_double(std::exp(s * b)) << ','
              << format_double(lo) << ',' << format_double(hi) << ',' << format_double(hi - lo) << ','
              << (o.ok ? 1 : 0) << ",\"" << err << "\"\n";
        }
      }
    }
    if (options.design) {
      auto out = open_out(dir / "sample.csv");
      write_sample(out, file.ids, sample);
    }

    Json m = Json::object();
    m["tool"] = "grcox";
    m["version"] = GRCOX_VERSION;
    m["command"] = "analyze";
    m["data"] = options.data;
    m["map"] = map;
    m["methods"] = options.methods;
    m["seed"] = options.seed;
    m["replicate"] = options.replicate;
    m["imputations"] = options.m_count;
    m["fcs_iterations"] = options.l_count;
    m["fcs_variables"] = options.fcs_vars;
    m["intercept_calibration"] = options.intercept_calibration;
    m["n_subjects"] = n;
    m["design"] = design_json(sample);
    if (options.pi_column) m["pi_column"] = *options.pi_column;
    Json warnings = Json::array();
    for (const auto& w : sample.design.warnings) warnings.push_back(w);
    for (const auto& o : outcomes) {
      for (const auto& w : o.warnings) warnings.push_back(o.method + ": " + w);
      if (!o.ok) warnings.push_back(o.method + " failed: " + o.error);
    }
    m["warnings"] = warnings;
    write_json(dir / "manifest.json", m);
    for (const auto& o : outcomes) {
      log << o.method << (o.ok ? "" : " (failed: " + o.error + ")") << '\n';
    }
    return 0;
  });
}

int cmd_design(const DesignOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    Json spec_json = read_json_file(options.spec);
    if (!spec_json.is_object() || !spec_json.contains("columns")) {
      throw SchemaError("design spec: needs a 'columns' object mapping the cohort columns");
    }
    CohortColumns cols = parse_column_map(spec_json["columns"]);
    spec_json.erase("columns");
    cols.x_true.clear();
    cols.u_true.clear();
    cols.delta_true.clear();
    cols.r.clear();
    cols.pi.clear();
    std::vector<std::string> issues;
    DesignSpec spec = parse_design_spec(spec_json, "", issues);
    if (!issues.empty()) {
      std::string msg = "design spec:";
      for (const auto& i : issues) msg += "\n  " + i;
      throw SchemaError(msg);
    }
    const CohortFile file = read_cohort(read_csv_file(options.data), cols);
    spec.validate(file.cohort.size());
    RngStream rng(options.seed, name_tag("design"));
    const TwoPhaseSample sample = draw_design(file.cohort, spec, rng);

    const fs::path out_path(options.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    {
      auto out = open_out(out_path);
      write_sample(out, file.ids, sample);
    }
    Json m = Json::object();
    m["tool"] = "grcox";
    m["version"] = GRCOX_VERSION;
    m["command"] = "design";
    m["seed"] = options.seed;
    m["spec"] = design_to_json(spec);
    m["design"] = design_json(sample);
    m["warnings"] = sample.design.warnings;
    fs::path mpath = out_path;
    mpath += ".manifest.json";
    write_json(mpath, m);
    log << to_string(sample.design.kind) << ": " << sample.n_validated() << " validated\n";
    for (std::size_t h = 0; h < sample.design.stratum_sizes.size(); ++h) {
      log << "  stratum " << h << ": " << sample.design.stratum_sampled[h] << " of " << sample.design.stratum_sizes[h]
          << '\n';
    }
    return 0;
  });
}

int cmd_diagnose(const DiagnoseOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    const SimulationPlan plan = parse_simulation_config(read_json_file(options.config));
    const ScenarioConfig& cfg = plan.cells.front();
    const double bound = censoring_bound_for(cfg);
    RngStream rng(cfg.seed, name_tag("diagnose"));
    const auto pairs = export_influence_pairs(cfg, bound, rng);

    const fs::path out_path(options.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    {
      auto out = open_out(out_path);
      out << "channel,id,true_dfbeta_x,error_dfbeta_x,true_dfbeta_z,error_dfbeta_z\n";
      for (const auto& p : pairs) {
        for (Eigen::Index i = 0; i < p.true_dfbeta.rows(); ++i) {
          out << p.channel << ',' << i + 1 << ',' << format_double(p.true_dfbeta(i, 0)) << ','
              << format_double(p.error_dfbeta(i, 0)) << ',' << format_double(p.true_dfbeta(i, 1)) << ','
              << format_double(p.error_dfbeta(i, 1)) << '\n';
        }
      }
    }
    Json m = Json::object();
    m["tool"] = "grcox";
    m["version"] = GRCOX_VERSION;
    m["command"] = "diagnose";
    m["config"] = plan.echo;
    m["censoring_bound"] = bound;
    Json r2 = Json::object();
    for (const auto& p : pairs) {
      r2[p.channel] = pair_r_squared(p, 0);
      log << p.channel << ": R^2 " << pair_r_squared(p, 0) << '\n';
    }
    m["r_squared_x"] = r2;
    m["warnings"] = Json::array();
    fs::path mpath = out_path;
    mpath += ".manifest.json";
    write_json(mpath, m);
    return 0;
  });
}

}  // namespace grcox
