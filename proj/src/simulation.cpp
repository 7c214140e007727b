#include "grcox/simulation.hpp"

#include "grcox/errors.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

namespace grcox {

namespace {

constexpr double kSigmaNu2 = 0.5;
constexpr double kSigmaEps2 = 0.5;
constexpr double kRhoEpsNu = 0.5;

struct CovariateDraws {
  Vector x;
  Vector z;
};

CovariateDraws draw_covariates(std::uint64_t seed, Eigen::Index draws) {
  RngStream rng(seed, name_tag("censoring-calibration"));
  CovariateDraws d;
  d.x.resize(draws);
  d.z.resize(draws);
  for (Eigen::Index i = 0; i < draws; ++i) {
    const auto xz = draw_bivariate_normal({0.0, 2.0}, {1.0, 1.0}, 0.5, rng);
    d.x[i] = xz[0];
    d.z[i] = xz[1];
  }
  return d;
}

double rate_from_hazards(const Vector& hazard, double theta) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < hazard.size(); ++i) {
    const double a = hazard[i] * theta;
    total += a > 0.0 ? -std::expm1(-a) / a : 1.0;
  }
  return total / static_cast<double>(hazard.size());
}

Vector hazards(const CovariateDraws& d, double beta_x, double beta_z, double lambda0) {
  return (lambda0 * (beta_x * d.x + beta_z * d.z).array().exp()).matrix();
}

FcsVariables fcs_for_scenario(int scenario) {
  switch (scenario) {
    case 1: return FcsVariables::Delta;
    case 2: return FcsVariables::DeltaU;
    default: return FcsVariables::DeltaUX;
  }
}

Matrix influence_for(const Matrix& x, const Matrix& z, const Vector& u, const Vector& delta) {
  Matrix cov(x.rows(), x.cols() + z.cols());
  cov << x, z;
  const Vector w = Vector::Ones(x.rows());
  const CoxData data{cov, u, delta, w};
  const CoxFit fit = fit_cox(data);
  if (!fit.converged) throw StateError("influence export: Cox fit did not converge");
  return dfbeta(fit, data).dfbeta;
}

}  // namespace

std::string to_string(CensoringCalibration c) {
  return c == CensoringCalibration::Exact ? "exact" : "mean-hazard";
}

CensoringCalibration censoring_calibration_from_string(const std::string& s) {
  if (s == "exact") return CensoringCalibration::Exact;
  if (s == "mean-hazard") return CensoringCalibration::MeanHazard;
  throw SchemaError("unknown censoring calibration '" + s + "'");
}

std::string to_string(MisclassModel m) {
  switch (m) {
    case MisclassModel::Main: return "main";
    case MisclassModel::DesignCompare: return "design-compare";
    case MisclassModel::Interactions: return "interactions";
  }
  return "main";
}

MisclassModel misclass_model_from_string(const std::string& s) {
  if (s == "main") return MisclassModel::Main;
  if (s == "design-compare") return MisclassModel::DesignCompare;
  if (s == "interactions") return MisclassModel::Interactions;
  throw SchemaError("unknown misclassification model '" + s + "'");
}

void ScenarioConfig::validate() const {
  if (n_subjects < 2) throw ParameterError("N must be >= 2");
  if (n_validated < 1 || n_validated > n_subjects) throw ParameterError("n must lie in [1, N]");
  if (!(censor_rate > 0.0 && censor_rate < 1.0)) throw ParameterError("censoring rate must lie in (0, 1)");
  if (!(lambda0 > 0.0)) throw ParameterError("lambda0 must be positive");
  if (error_scenario < 1 || error_scenario > 3) throw ParameterError("error scenario must be 1, 2 or 3");
  if (replicates < 1) throw ParameterError("replicates must be >= 1");
  if (m_count < 1 || l_count < 0) throw ParameterError("M must be >= 1 and L >= 0");
  for (const auto& m : methods) {
    if (!is_known_method(m)) throw SchemaError("unknown method '" + m + "'");
  }
  DesignSpec d = design;
  d.n_target = n_validated;
  d.validate(n_subjects);
}

EstimationOptions ScenarioConfig::estimation_options() const {
  EstimationOptions o;
  o.m_count = m_count;
  o.l_count = l_count;
  o.intercept_calibration = intercept_calibration;
  o.fcs_vars = fcs_for_scenario(error_scenario);
  o.calibration = calibration;
  return o;
}

double censoring_rate_at(double theta, double beta_x, double beta_z, double lambda0, std::uint64_t seed,
                         Eigen::Index draws) {
  const CovariateDraws d = draw_covariates(seed, draws);
  return rate_from_hazards(hazards(d, beta_x, beta_z, lambda0), theta);
}

double calibrate_censoring_bound(double beta_x, double beta_z, double lambda0, double target,
                                 std::uint64_t seed, Eigen::Index draws) {
  if (!(target > 0.0 && target < 1.0)) throw ParameterError("censoring target must lie in (0, 1)");
  if (!(lambda0 > 0.0)) throw ParameterError("lambda0 must be positive");
  if (draws < 1) throw ParameterError("censoring calibration needs at least one draw");

  using Key = std::tuple<double, double, double, double, std::uint64_t, Eigen::Index>;
  static std::mutex mu;
  static std::map<Key, double> cache;
  const Key key{beta_x, beta_z, lambda0, target, seed, draws};
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }

  const Vector h = hazards(draw_covariates(seed, draws), beta_x, beta_z, lambda0);
  double lo = 0.0;
  double hi = 1.0;
  int guard = 0;
  while (rate_from_hazards(h, hi) > target) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 200) throw ParameterError("censoring target is unreachable");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rate_from_hazards(h, mid) > target ? lo : hi) = mid;
  }
  const double theta = 0.5 * (lo + hi);
  std::lock_guard lock(mu);
  cache.emplace(key, theta);
  return theta;
}

double mean_hazard_censoring_bound(double beta_x, double beta_z, double lambda0, double target) {
  if (!(target > 0.0 && target < 1.0)) throw ParameterError("censoring target must lie in (0, 1)");
  if (!(lambda0 > 0.0)) throw ParameterError("lambda0 must be positive");
  // X ~ N(0, 1), Z ~ N(2, 1), corr 0.5: the linear predictor is normal.
  const double mean = 2.0 * beta_z;
  const double var = beta_x * beta_x + beta_z * beta_z + beta_x * beta_z;
  const double rate = lambda0 * std::exp(mean + 0.5 * var);
  double lo = 0.0;
  double hi = 1.0;
  auto cens = [](double a) { return a > 0.0 ? -std::expm1(-a) / a : 1.0; };
  while (cens(hi) > target) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cens(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) / rate;
}

double censoring_bound_for(const ScenarioConfig& config) {
  if (config.censoring_calibration == CensoringCalibration::MeanHazard) {
    return mean_hazard_censoring_bound(config.beta_x, config.beta_z, config.lambda0, config.censor_rate);
  }
  return calibrate_censoring_bound(config.beta_x, config.beta_z, config.lambda0, config.censor_rate, config.seed);
}

Cohort generate_cohort(const ScenarioConfig& config, double censor_bound, RngStream& rng) {
  if (!(censor_bound > 0.0)) throw ParameterError("censoring bound must be positive");
  const Eigen::Index n = config.n_subjects;
  Cohort c;
  c.x_star.resize(n, 1);
  c.z.resize(n, 1);
  c.u_star.resize(n);
  c.delta_star.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto xz = draw_bivariate_normal({0.0, 2.0}, {1.0, 1.0}, 0.5, rng);
    const double rate = config.lambda0 * std::exp(config.beta_x * xz[0] + config.beta_z * xz[1]);
    const double t = -std::log(rng.uniform()) / rate;
    const double cens = censor_bound * rng.uniform();
    c.x_star(i, 0) = xz[0];
    c.z(i, 0) = xz[1];
    c.u_star[i] = std::min(t, cens);
    c.delta_star[i] = t <= cens ? 1.0 : 0.0;
  }
  c.x_true = c.x_star;
  c.u_true = c.u_star;
  c.delta_true = c.delta_star;
  return c;
}

double misclassification_probability(MisclassModel model, double beta_x, double delta, double x, double u,
                                     double z) {
  switch (model) {
    case MisclassModel::Main: return expit(-1.1 + 3.0 * delta - 0.3 * x - 0.2 * u + 0.1 * z);
    case MisclassModel::DesignCompare: {
      const double a = beta_x > std::log(2.0) ? -1.5 : -1.0;
      return expit(a + 4.0 * delta + 0.5 * x - 0.5 * u - 0.5 * z);
    }
    case MisclassModel::Interactions:
      return expit(-1.1 + 0.5 * delta - 0.25 * x - 0.1 * u + 0.2 * z + 0.85 * delta * x + 0.2 * delta * u +
                   0.8 * delta * z);
  }
  return 0.0;
}

Cohort apply_error_scenario(const Cohort& truth, int scenario, MisclassModel model, double beta_x,
                            RngStream& rng) {
  if (!truth.has_truth()) throw StateError("apply_error_scenario: cohort carries no truth block");
  if (scenario < 1 || scenario > 3) throw ParameterError("error scenario must be 1, 2 or 3");
  Cohort c = truth;
  const Eigen::Index n = truth.size();
  const Matrix& x = *truth.x_true;
  const Vector& u = *truth.u_true;
  const Vector& d = *truth.delta_true;
  const double sigma_nu = std::sqrt(kSigmaNu2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = x(i, 0);
    const double zi = truth.z(i, 0);
    c.delta_star[i] = rng.bernoulli(misclassification_probability(model, beta_x, d[i], xi, u[i], zi)) ? 1.0 : 0.0;
    if (scenario == 1) continue;
    double eps = 0.0;
    double nu = 0.0;
    if (scenario == 2) {
      nu = sigma_nu * rng.normal();
    } else {
      const auto en = draw_bivariate_normal({0.0, 0.0}, {kSigmaEps2, kSigmaNu2}, kRhoEpsNu, rng);
      eps = en[0];
      nu = en[1];
      c.x_star(i, 0) = 0.2 + xi - 0.1 * zi - 0.4 * d[i] + 0.25 * u[i] + eps;
    }
    const double us = u[i] + 3.0 * sigma_nu - 0.2 * xi - 1.05 * zi + nu;
    c.u_star[i] = std::abs(us);
  }
  return c;
}

ReplicateRecord run_replication(const ScenarioConfig& config, double censor_bound, int replicate_index) {
  ReplicateRecord rec;
  rec.index = replicate_index;
  const RngStream base(config.seed, static_cast<std::uint64_t>(replicate_index));
  try {
    RngStream cohort_rng = base.substream(1);
    const Cohort truth = generate_cohort(config, censor_bound, cohort_rng);
    RngStream error_rng = base.substream(2);
    const Cohort cohort =
        config.no_error ? truth
                        : apply_error_scenario(truth, config.error_scenario, config.misclass, config.beta_x, error_rng);
    rec.misclass = misclassification_metrics(*cohort.delta_true, cohort.delta_star);
    rec.censoring_rate = 1.0 - cohort.delta_true->mean();

    DesignSpec spec = config.design;
    spec.n_target = config.n_validated;
    RngStream design_rng = base.substream(3);
    const TwoPhaseSample sample = draw_design(cohort, spec, design_rng);
    rec.n_validated = sample.n_validated();
    rec.warnings = sample.design.warnings;
    rec.outcomes = estimate_methods(cohort, sample, config.methods, config.estimation_options(), base.substream(4));
  } catch (const std::exception& e) {
    rec.outcomes.clear();
    for (const auto& m : config.methods) {
      MethodOutcome o;
      o.method = m;
      o.error = e.what();
      rec.outcomes.push_back(std::move(o));
    }
    rec.warnings.push_back(std::string("replicate failed before estimation: ") + e.what());
  }
  return rec;
}

SimulationResult run_simulation(const ScenarioConfig& config, double censor_bound, int threads,
                                const std::function<void(int)>& progress) {
  config.validate();
  SimulationResult out;
  out.censor_bound = censor_bound;
  out.records.resize(static_cast<std::size_t>(config.replicates));
  std::atomic<int> next{0};
  std::mutex progress_mu;
  auto worker = [&] {
    for (int r = next++; r < config.replicates; r = next++) {
      out.records[static_cast<std::size_t>(r)] = run_replication(config, censor_bound, r);
      if (progress) {
        std::lock_guard lock(progress_mu);
        progress(r);
      }
    }
  };
  const int k = std::max(1, std::min(threads, config.replicates));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < k; ++t) pool.emplace_back(worker);
    worker();
  }
  bool has_ht = false;
  for (const auto& m : config.methods) has_ht = has_ht || m == "HT";
  if (has_ht) out.metrics = aggregate_metrics(out.records, config.beta_x);
  return out;
}

std::vector<InfluencePairs> export_influence_pairs(const ScenarioConfig& config, double censor_bound,
                                                   RngStream& rng) {
  RngStream cohort_rng = rng.substream(1);
  const Cohort truth = generate_cohort(config, censor_bound, cohort_rng);
  RngStream error_rng = rng.substream(2);
  const Cohort ep = config.no_error ? truth : apply_error_scenario(truth, 3, config.misclass, config.beta_x, error_rng);
  const Matrix& x = *truth.x_true;
  const Vector& u = *truth.u_true;
  const Vector& d = *truth.delta_true;
  const Matrix truth_df = influence_for(x, truth.z, u, d);
  std::vector<InfluencePairs> out;
  out.push_back({"X", truth_df, influence_for(ep.x_star, truth.z, u, d)});
  out.push_back({"U", truth_df, influence_for(x, truth.z, ep.u_star, d)});
  out.push_back({"Delta", truth_df, influence_for(x, truth.z, u, ep.delta_star)});
  out.push_back({"all", truth_df, influence_for(ep.x_star, truth.z, ep.u_star, ep.delta_star)});
  return out;
}

double pair_r_squared(const InfluencePairs& pairs, int coef) {
  const Vector a = pairs.error_dfbeta.col(coef);
  const Vector b = pairs.true_dfbeta.col(coef);
  const double ma = a.mean();
  const double mb = b.mean();
  const double sab = (a.array() - ma).matrix().dot((b.array() - mb).matrix());
  const double saa = (a.array() - ma).square().sum();
  const double sbb = (b.array() - mb).square().sum();
  if (!(saa > 0.0) || !(sbb > 0.0)) return saa == 0.0 && sbb == 0.0 ? 1.0 : 0.0;
  return sab * sab / (saa * sbb);
}

}  // namespace grcox
