#include "grcox/config.hpp"

#include "grcox/errors.hpp"
#include "grcox/estimators.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

namespace grcox {

namespace {

const std::set<std::string> kTopKeys{"name",         "profile",       "seed",
                                     "replicates",   "imputations",   "fcs_iterations",
                                     "n_subjects",   "n_validated",   "beta_z",
                                     "lambda0",      "grid",          "misclassification",
                                     "censoring_calibration",          "methods",
                                     "intercept_calibration",          "no_error",
                                     "calibration"};
const std::set<std::string> kGridKeys{"scenario", "censoring", "beta_x", "design"};
const std::set<std::string> kDesignKeys{"kind",   "n",           "cc_ratio",        "cutpoint_quantiles",
                                        "cutpoints", "strat_column", "influence_column"};
const std::set<std::string> kCalibrationKeys{"tolerance", "max_iterations", "g_cap"};

class Reader {
 public:
  explicit Reader(std::vector<std::string>& issues) : issues_(issues) {}

  void issue(const std::string& path, const std::string& msg) { issues_.push_back((path.empty() ? "/" : path) + ": " + msg); }

  void unknown_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& path) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!allowed.count(it.key())) issue(path + "/" + it.key(), "unknown key");
    }
  }

  bool object(const Json& j, const std::string& path) {
    if (j.is_object()) return true;
    issue(path, "expected an object");
    return false;
  }

  template <class T>
  T integer(const Json& obj, const std::string& key, const std::string& path, T fallback, T lo, T hi) {
    if (!obj.contains(key)) return fallback;
    const Json& v = obj.at(key);
    const std::string p = path + "/" + key;
    if (!v.is_number_integer()) {
      issue(p, "expected an integer");
      return fallback;
    }
    if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(hi)) {
        issue(p, "must be <= " + std::to_string(hi));
        return fallback;
      }
      return static_cast<T>(u);
    }
    const auto x = v.get<std::int64_t>();
    if (x < static_cast<std::int64_t>(lo) || (hi >= 0 && static_cast<std::uint64_t>(x) > static_cast<std::uint64_t>(hi))) {
      issue(p, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      return fallback;
    }
    return static_cast<T>(x);
  }

  double number(const Json& v, const std::string& p, double fallback) {
    if (!v.is_number()) {
      issue(p, "expected a number");
      return fallback;
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) issue(p, "must be finite");
    return x;
  }

  double number(const Json& obj, const std::string& key, const std::string& path, double fallback) {
    return obj.contains(key) ? number(obj.at(key), path + "/" + key, fallback) : fallback;
  }

  bool boolean(const Json& obj, const std::string& key, const std::string& path, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_boolean()) {
      issue(path + "/" + key, "expected true or false");
      return fallback;
    }
    return obj.at(key).get<bool>();
  }

  std::string string(const Json& obj, const std::string& key, const std::string& path, const std::string& fallback,
                     const std::set<std::string>& allowed = {}) {
    if (!obj.contains(key)) return fallback;
    const Json& v = obj.at(key);
    if (!v.is_string()) {
      issue(path + "/" + key, "expected a string");
      return fallback;
    }
    const auto s = v.get<std::string>();
    if (!allowed.empty() && !allowed.count(s)) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
      issue(path + "/" + key, "must be one of " + opts);
      return fallback;
    }
    return s;
  }

  std::vector<double> numbers(const Json& obj, const std::string& key, const std::string& path,
                              const std::vector<double>& fallback) {
    if (!obj.contains(key)) return fallback;
    const Json& v = obj.at(key);
    const std::string p = path + "/" + key;
    if (!v.is_array() || v.empty()) {
      issue(p, "expected a non-empty array of numbers");
      return fallback;
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], p + "/" + std::to_string(i), 0.0));
    return out;
  }

 private:
  std::vector<std::string>& issues_;
};

struct Parsed {
  SimulationPlan plan;
  std::vector<std::string> issues;
};

Parsed parse(const Json& config, const std::optional<std::string>& profile_override) {
  Parsed out;
  Reader rd(out.issues);
  if (!rd.object(config, "")) return out;
  rd.unknown_keys(config, kTopKeys, "");

  SimulationPlan& plan = out.plan;
  plan.name = rd.string(config, "name", "", "simulation");
  plan.profile = rd.string(config, "profile", "", "desk", {"desk", "paper"});
  if (profile_override) {
    if (*profile_override != "desk" && *profile_override != "paper") {
      rd.issue("/profile", "profile override must be desk or paper");
    } else {
      plan.profile = *profile_override;
    }
  }

  ScenarioConfig base;
  base.seed = rd.integer<std::uint64_t>(config, "seed", "", base.seed, 0, UINT64_MAX);
  base.replicates = rd.integer<int>(config, "replicates", "", base.replicates, 1, 1000000);
  base.m_count = rd.integer<int>(config, "imputations", "", base.m_count, 1, 10000);
  base.l_count = rd.integer<int>(config, "fcs_iterations", "", base.l_count, 0, 100000);
  if (plan.profile == "paper") {
    base.replicates = 2000;
    base.m_count = 50;
    base.l_count = 500;
  }
  base.n_subjects = rd.integer<Eigen::Index>(config, "n_subjects", "", base.n_subjects, 2, 100000000);
  base.n_validated = rd.integer<Eigen::Index>(config, "n_validated", "", base.n_validated, 1, 100000000);
  base.beta_z = rd.number(config, "beta_z", "", base.beta_z);
  base.lambda0 = rd.number(config, "lambda0", "", base.lambda0);
  if (!(base.lambda0 > 0.0)) rd.issue("/lambda0", "must be positive");
  base.misclass = misclass_model_from_string(
      rd.string(config, "misclassification", "", "main", {"main", "design-compare", "interactions"}));
  base.censoring_calibration = censoring_calibration_from_string(
      rd.string(config, "censoring_calibration", "", "exact", {"exact", "mean-hazard"}));
  base.intercept_calibration = rd.boolean(config, "intercept_calibration", "", base.intercept_calibration);
  base.no_error = rd.boolean(config, "no_error", "", base.no_error);

  if (config.contains("calibration") && rd.object(config["calibration"], "/calibration")) {
    const Json& c = config["calibration"];
    rd.unknown_keys(c, kCalibrationKeys, "/calibration");
    base.calibration.tolerance = rd.number(c, "tolerance", "/calibration", base.calibration.tolerance);
    if (!(base.calibration.tolerance > 0.0)) rd.issue("/calibration/tolerance", "must be positive");
    base.calibration.max_iterations =
        rd.integer<int>(c, "max_iterations", "/calibration", base.calibration.max_iterations, 1, 100000);
    base.calibration.g_cap = rd.number(c, "g_cap", "/calibration", base.calibration.g_cap);
    if (!(base.calibration.g_cap > 1.0)) rd.issue("/calibration/g_cap", "must exceed 1");
  }

  if (config.contains("methods")) {
    const Json& m = config["methods"];
    if (!m.is_array() || m.empty()) {
      rd.issue("/methods", "expected a non-empty array of method names");
    } else {
      base.methods.clear();
      for (std::size_t i = 0; i < m.size(); ++i) {
        const std::string p = "/methods/" + std::to_string(i);
        if (!m[i].is_string()) {
          rd.issue(p, "expected a string");
          continue;
        }
        const auto name = m[i].get<std::string>();
        if (!is_known_method(name)) {
          rd.issue(p, "unknown method '" + name + "'");
        } else if (std::find(base.methods.begin(), base.methods.end(), name) != base.methods.end()) {
          rd.issue(p, "duplicate method '" + name + "'");
        } else {
          base.methods.push_back(name);
        }
      }
    }
  }
  if (std::find(base.methods.begin(), base.methods.end(), "HT") == base.methods.end()) {
    rd.issue("/methods", "must include HT, the reference for relative efficiency");
  }

  std::vector<int> scenarios{1};
  std::vector<double> censoring{0.5};
  std::vector<double> beta_x{base.beta_x};
  std::vector<DesignSpec> designs{DesignSpec{}};
  if (config.contains("grid") && rd.object(config["grid"], "/grid")) {
    const Json& g = config["grid"];
    rd.unknown_keys(g, kGridKeys, "/grid");
    if (g.contains("scenario")) {
      const Json& s = g["scenario"];
      if (!s.is_array() || s.empty()) {
        rd.issue("/grid/scenario", "expected a non-empty array");
      } else {
        scenarios.clear();
        for (std::size_t i = 0; i < s.size(); ++i) {
          if (!s[i].is_number_integer() || s[i].get<int>() < 1 || s[i].get<int>() > 3) {
            rd.issue("/grid/scenario/" + std::to_string(i), "must be 1, 2 or 3");
          } else {
            scenarios.push_back(s[i].get<int>());
          }
        }
      }
    }
    censoring = rd.numbers(g, "censoring", "/grid", censoring);
    for (std::size_t i = 0; i < censoring.size(); ++i) {
      if (!(censoring[i] > 0.0 && censoring[i] < 1.0)) {
        rd.issue("/grid/censoring/" + std::to_string(i), "must lie in (0, 1)");
      }
    }
    beta_x = rd.numbers(g, "beta_x", "/grid", beta_x);
    if (g.contains("design")) {
      const Json& d = g["design"];
      if (!d.is_array() || d.empty()) {
        rd.issue("/grid/design", "expected a non-empty array of design objects");
      } else {
        designs.clear();
        for (std::size_t i = 0; i < d.size(); ++i) {
          designs.push_back(parse_design_spec(d[i], "/grid/design/" + std::to_string(i), out.issues));
        }
      }
    }
  }

  Json echo = Json::object();
  echo["name"] = plan.name;
  echo["profile"] = plan.profile;
  echo["seed"] = base.seed;
  echo["replicates"] = base.replicates;
  echo["imputations"] = base.m_count;
  echo["fcs_iterations"] = base.l_count;
  echo["n_subjects"] = base.n_subjects;
  echo["n_validated"] = base.n_validated;
  echo["beta_z"] = base.beta_z;
  echo["lambda0"] = base.lambda0;
  echo["misclassification"] = to_string(base.misclass);
  echo["censoring_calibration"] = to_string(base.censoring_calibration);
  echo["methods"] = base.methods;
  echo["intercept_calibration"] = base.intercept_calibration;
  echo["no_error"] = base.no_error;
  echo["calibration"] = {{"tolerance", base.calibration.tolerance},
                         {"max_iterations", base.calibration.max_iterations},
                         {"g_cap", base.calibration.g_cap}};
  Json grid = Json::object();
  grid["scenario"] = scenarios;
  grid["censoring"] = censoring;
  grid["beta_x"] = beta_x;
  grid["design"] = Json::array();
  for (const auto& d : designs) grid["design"].push_back(design_to_json(d));
  echo["grid"] = grid;
  plan.echo = echo;

  for (int s : scenarios) {
    for (double c : censoring) {
      for (double b : beta_x) {
        for (std::size_t k = 0; k < designs.size(); ++k) {
          ScenarioConfig cell = base;
          cell.error_scenario = s;
          cell.censor_rate = c;
          cell.beta_x = b;
          cell.design = designs[k];
          if (cell.design.n_target > 0) cell.n_validated = cell.design.n_target;
          cell.design.n_target = cell.n_validated;
          try {
            cell.validate();
          } catch (const Error& e) {
            rd.issue("/grid/design/" + std::to_string(k), e.what());
          }
          plan.cells.push_back(cell);
        }
      }
    }
  }
  return out;
}

}  // namespace

DesignSpec parse_design_spec(const Json& j, const std::string& path, std::vector<std::string>& issues) {
  Reader rd(issues);
  DesignSpec d;
  if (!rd.object(j, path)) return d;
  rd.unknown_keys(j, kDesignKeys, path);
  if (!j.contains("kind")) {
    rd.issue(path + "/kind", "required");
  } else {
    const auto kind = rd.string(j, "kind", path, "SRS", {"SRS", "CC", "SCCB", "SCCN"});
    d.kind = design_kind_from_string(kind);
  }
  d.n_target = rd.integer<Eigen::Index>(j, "n", path, 0, 1, 100000000);
  d.cc_ratio = rd.number(j, "cc_ratio", path, d.cc_ratio);
  if (!(d.cc_ratio > 0.0)) rd.issue(path + "/cc_ratio", "must be positive");
  d.cutpoint_quantiles = rd.numbers(j, "cutpoint_quantiles", path, d.cutpoint_quantiles);
  for (std::size_t i = 0; i < d.cutpoint_quantiles.size(); ++i) {
    const double q = d.cutpoint_quantiles[i];
    if (!(q > 0.0 && q < 1.0) || (i > 0 && !(q > d.cutpoint_quantiles[i - 1]))) {
      rd.issue(path + "/cutpoint_quantiles/" + std::to_string(i), "quantiles must be increasing within (0, 1)");
    }
  }
  if (j.contains("cutpoints")) {
    d.cutpoints = rd.numbers(j, "cutpoints", path, {});
    for (std::size_t i = 1; i < d.cutpoints->size(); ++i) {
      if (!((*d.cutpoints)[i] > (*d.cutpoints)[i - 1])) {
        rd.issue(path + "/cutpoints/" + std::to_string(i), "cutpoints must be increasing");
      }
    }
  }
  d.strat_column = rd.integer<int>(j, "strat_column", path, 0, 0, 1000);
  d.influence_column = rd.integer<int>(j, "influence_column", path, 0, 0, 1000);
  return d;
}

Json design_to_json(const DesignSpec& spec) {
  Json j = Json::object();
  j["kind"] = to_string(spec.kind);
  if (spec.n_target > 0) j["n"] = spec.n_target;
  if (spec.kind == DesignKind::CC) j["cc_ratio"] = spec.cc_ratio;
  if (spec.kind == DesignKind::SCCB || spec.kind == DesignKind::SCCN) {
    if (spec.cutpoints) {
      j["cutpoints"] = *spec.cutpoints;
    } else {
      j["cutpoint_quantiles"] = spec.cutpoint_quantiles;
    }
    j["strat_column"] = spec.strat_column;
    if (spec.kind == DesignKind::SCCN) j["influence_column"] = spec.influence_column;
  }
  return j;
}

std::vector<std::string> config_issues(const Json& config) { return parse(config, std::nullopt).issues; }

SimulationPlan parse_simulation_config(const Json& config, const std::optional<std::string>& profile) {
  Parsed p = parse(config, profile);
  if (!p.issues.empty()) {
    std::string msg = "config has " + std::to_string(p.issues.size()) + " problem(s):";
    for (const auto& i : p.issues) msg += "\n  " + i;
    throw SchemaError(msg);
  }
  return std::move(p.plan);
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
  }
}

CohortColumns parse_column_map(const Json& j) {
  if (!j.is_object()) throw SchemaError("column map: expected an object");
  static const std::set<std::string> keys{"id", "x_star", "z", "u_star", "delta_star", "x", "u", "delta", "r", "pi",
                                          "scale"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!keys.count(it.key())) throw SchemaError("column map: unknown key '" + it.key() + "'");
  }
  auto str = [&](const char* k) -> std::string {
    if (!j.contains(k)) return {};
    if (!j[k].is_string()) throw SchemaError(std::string("column map: '") + k + "' must be a column name");
    return j[k].get<std::string>();
  };
  auto list = [&](const char* k) -> std::vector<std::string> {
    if (!j.contains(k)) return {};
    if (j[k].is_string()) return {j[k].get<std::string>()};
    if (!j[k].is_array()) throw SchemaError(std::string("column map: '") + k + "' must be a name or list of names");
    std::vector<std::string> out;
    for (const auto& v : j[k]) {
      if (!v.is_string()) throw SchemaError(std::string("column map: '") + k + "' entries must be strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  };
  CohortColumns c;
  c.id = str("id");
  c.x_star = list("x_star");
  c.z = list("z");
  c.u_star = str("u_star");
  c.delta_star = str("delta_star");
  c.x_true = list("x");
  c.u_true = str("u");
  c.delta_true = str("delta");
  c.r = str("r");
  c.pi = str("pi");
  return c;
}

std::optional<int> env_threads() {
  const char* v = std::getenv("GRCOX_THREADS");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const long k = std::strtol(v, &end, 10);
  if (*end != '\0' || k < 1 || k > 4096) throw SchemaError("GRCOX_THREADS must be a positive integer");
  return static_cast<int>(k);
}

std::optional<std::string> env_out_dir() {
  const char* v = std::getenv("GRCOX_OUT_DIR");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

}  // namespace grcox
