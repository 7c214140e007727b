#pragma once

#include "grcox/cohort.hpp"
#include "grcox/designs.hpp"
#include "grcox/estimators.hpp"
#include "grcox/metrics.hpp"
#include "grcox/numeric.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace grcox {

/// Event-indicator misclassification models: main simulations, the design comparison, and
/// the model with exposure-event interactions.
enum class MisclassModel { Main, DesignCompare, Interactions };

std::string to_string(MisclassModel m);
MisclassModel misclass_model_from_string(const std::string& s);

/// How the censoring bound is chosen for a nominal censoring rate: exactly (Monte Carlo
/// bisection on the marginal rate) or from the population-average hazard alone.
enum class CensoringCalibration { Exact, MeanHazard };

std::string to_string(CensoringCalibration c);
CensoringCalibration censoring_calibration_from_string(const std::string& s);

/// One simulation cell.
struct ScenarioConfig {
  Eigen::Index n_subjects = 2000;
  Eigen::Index n_validated = 400;
  double beta_x = 0.4054651081081644;
  double beta_z = -0.6931471805599453;
  double lambda0 = 0.1;
  double censor_rate = 0.5;
  CensoringCalibration censoring_calibration = CensoringCalibration::Exact;
  int error_scenario = 1;
  MisclassModel misclass = MisclassModel::Main;
  bool no_error = false;  // error-prone columns copy the truth
  DesignSpec design;
  std::vector<std::string> methods{"True", "HT", "GRN"};
  int m_count = 10;
  int l_count = 50;
  int replicates = 500;
  std::uint64_t seed = 20240101;
  bool intercept_calibration = true;
  CalibrationOptions calibration;

  void validate() const;
  EstimationOptions estimation_options() const;
};

/// Upper bound theta of C ~ U(0, theta) giving the target censoring probability P(C < T).
/// The rate for a given theta is the Monte Carlo average of (1 - exp(-r theta)) / (r theta)
/// over `draws` covariate draws (r the subject's hazard), with common random numbers across
/// the bisection.
double calibrate_censoring_bound(double beta_x, double beta_z, double lambda0, double target,
                                 std::uint64_t seed, Eigen::Index draws = 1000000);

/// Bound theta solving (1 - exp(-r theta)) / (r theta) = target for the mean hazard
/// r = E[lambda0 exp(beta_x X + beta_z Z)] of the covariate distribution.
double mean_hazard_censoring_bound(double beta_x, double beta_z, double lambda0, double target);

/// Bound for a cell under its calibration mode.
double censoring_bound_for(const ScenarioConfig& config);

/// Expected censoring rate at theta under the same Monte Carlo average.
double censoring_rate_at(double theta, double beta_x, double beta_z, double lambda0,
                         std::uint64_t seed, Eigen::Index draws = 1000000);

/// Truth-only cohort; the error-prone columns are set to the truth.
Cohort generate_cohort(const ScenarioConfig& config, double censor_bound, RngStream& rng);

/// Adds the error-prone columns of the given scenario to a truth cohort.
Cohort apply_error_scenario(const Cohort& truth, int scenario, MisclassModel model, double beta_x,
                            RngStream& rng);

/// Error-prone event indicator probability for one subject.
double misclassification_probability(MisclassModel model, double beta_x, double delta, double x,
                                     double u, double z);

/// One replicate: cohort, design, every requested method.
ReplicateRecord run_replication(const ScenarioConfig& config, double censor_bound, int replicate_index);

struct SimulationResult {
  std::vector<ReplicateRecord> records;  // ordered by replicate index
  MetricsReport metrics;
  double censor_bound = 0.0;
};

/// Runs all replicates over `threads` workers; output does not depend on the thread count.
/// `progress` (optional) is called after each finished replicate.
SimulationResult run_simulation(const ScenarioConfig& config, double censor_bound, int threads,
                                const std::function<void(int)>& progress = {});

/// Per-subject pairs of true-data and error-prone dfbeta under one channel set.
struct InfluencePairs {
  std::string channel;  // "X", "U", "Delta" or "all"
  Matrix true_dfbeta;
  Matrix error_dfbeta;
};

/// Generates one scenario-3 cohort and, for each channel set, refits the Cox model with only
/// those variables replaced by their error-prone versions.
std::vector<InfluencePairs> export_influence_pairs(const ScenarioConfig& config, double censor_bound,
                                                   RngStream& rng);

/// R^2 of the least-squares line through (error, true) pairs of one coefficient.
double pair_r_squared(const InfluencePairs& pairs, int coef = 0);

}  // namespace grcox
