#pragma once

#include "grcox/cohort.hpp"
#include "grcox/numeric.hpp"

#include <optional>
#include <vector>

namespace grcox {

struct DesignSpec {
  DesignKind kind = DesignKind::SRS;
  Eigen::Index n_target = 0;
  double cc_ratio = 1.0;  // controls per case when n_target is 0 (case-control only)
  std::vector<double> cutpoint_quantiles{0.2, 0.5, 0.8};
  std::optional<std::vector<double>> cutpoints;  // absolute cutpoints override the quantiles
  int strat_column = 0;                          // column of X* used for stratification
  int influence_column = 0;                      // Neyman: dfbeta column of the naive fit

  void validate(Eigen::Index n_subjects) const;
};

TwoPhaseSample draw_srs(Eigen::Index n_subjects, Eigen::Index n, RngStream& rng);

TwoPhaseSample draw_case_control(const Vector& delta_star, Eigen::Index n_target, RngStream& rng,
                                 double cc_ratio = 1.0);

/// Cutpoints at the given empirical quantiles (type-7 interpolation).
std::vector<double> quantile_cutpoints(const Vector& values, const std::vector<double>& probs);

/// Stratum label 0..7: 4 * delta_star + (number of cutpoints strictly below the value).
IndexVector stratum_labels(const Vector& delta_star, const Vector& strat_values,
                           const std::vector<double>& cutpoints);

/// Largest-remainder allocation of `total` proportional to `weights`, capped by `capacity`;
/// capacity shortfalls are redistributed over strata with room left.
std::vector<Eigen::Index> allocate(const std::vector<double>& weights,
                                   const std::vector<Eigen::Index>& capacity, Eigen::Index total);

TwoPhaseSample draw_scc_balanced(const Vector& delta_star, const Vector& strat_values,
                                 const std::vector<double>& cutpoints, Eigen::Index n_target,
                                 RngStream& rng);

TwoPhaseSample draw_scc_neyman(const Vector& delta_star, const Vector& strat_values,
                               const std::vector<double>& cutpoints, const Vector& influence,
                               Eigen::Index n_target, RngStream& rng);

/// Draws the design described by `spec` for `cohort`. Neyman allocation uses the naive
/// full-cohort dfbeta, computed on demand.
TwoPhaseSample draw_design(const Cohort& cohort, const DesignSpec& spec, RngStream& rng);

}  // namespace grcox
