#pragma once

#include "grcox/cohort.hpp"
#include "grcox/cox.hpp"
#include "grcox/simulation.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace testing {

inline grcox::ScenarioConfig small_config(Eigen::Index n_subjects, double censor_rate = 0.5) {
  grcox::ScenarioConfig c;
  c.n_subjects = n_subjects;
  c.n_validated = n_subjects / 5;
  c.censor_rate = censor_rate;
  return c;
}

// Simulated cohort with the error-prone columns of the given scenario (0 = no error).
inline grcox::Cohort simulated_cohort(Eigen::Index n_subjects, int scenario, std::uint64_t seed,
                                      double censor_rate = 0.5) {
  const auto cfg = small_config(n_subjects, censor_rate);
  const double bound = grcox::mean_hazard_censoring_bound(cfg.beta_x, cfg.beta_z, cfg.lambda0, censor_rate);
  grcox::RngStream rng(seed, 0);
  grcox::Cohort truth = grcox::generate_cohort(cfg, bound, rng);
  if (scenario == 0) return truth;
  return grcox::apply_error_scenario(truth, scenario, grcox::MisclassModel::Main, cfg.beta_x, rng);
}

inline grcox::TwoPhaseSample census(Eigen::Index n) {
  grcox::TwoPhaseSample s;
  s.r = Eigen::VectorXi::Ones(n);
  s.pi = grcox::Vector::Ones(n);
  return s;
}

inline grcox::CoxFit true_fit(const grcox::Cohort& c) {
  grcox::Matrix cov(c.size(), c.p() + c.q());
  cov << *c.x_true, c.z;
  const grcox::Vector w = grcox::Vector::Ones(c.size());
  return grcox::fit_cox(grcox::CoxData{cov, *c.u_true, *c.delta_true, w});
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("grcox_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
