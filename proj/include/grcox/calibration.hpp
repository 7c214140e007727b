#pragma once

#include "grcox/cohort.hpp"
#include "grcox/cox.hpp"
#include "grcox/numeric.hpp"

#include <optional>
#include <string>
#include <utility>

namespace grcox {

enum class AuxiliarySource { GRN, GRMI, GRFCSMI, IFImputed, User };

std::string to_string(AuxiliarySource s);

/// Raking auxiliary variables A_i for all N phase-one subjects.
struct AuxiliaryMatrix {
  Matrix a;
  AuxiliarySource source = AuxiliarySource::User;
  Vector totals;  // column sums over all N

  AuxiliaryMatrix() = default;
  AuxiliaryMatrix(Matrix values, AuxiliarySource src);

  /// Copy with a constant-one column appended (calibrates the weight total to N).
  AuxiliaryMatrix with_intercept() const;
};

struct CalibrationOptions {
  int max_iterations = 100;
  double g_cap = 1e6;
  double tolerance = 1e-8;  // relative: |resid|_inf / (1 + |totals|_inf)
};

struct RakingWeights {
  Vector lambda;  // Lagrange multipliers on the original auxiliary scale
  Vector g;       // exp(lambda' A_i) for every subject
  Vector calib_residual;
  int iterations = 0;
};

/// HT or raked Cox estimate on the validated subset.
struct RakingFit {
  Vector beta;
  Vector lambda;   // empty for HT
  Vector weights;  // N, g_i / pi_i for validated subjects, 0 otherwise
  Vector calib_residual;
  Matrix covariance;
  std::pair<double, double> g_range{1.0, 1.0};
  CoxFit cox;
  Matrix dfbeta_validated;  // validated rows only, in subject order
};

/// Solves sum_i R_i (g_i/pi_i) A_i = sum_i A_i with g_i = exp(lambda'A_i) by damped Newton.
/// Throws RankError when A is rank deficient on the validated subset and CalibrationFailure
/// when the iteration fails.
RakingWeights solve_raking_weights(const AuxiliaryMatrix& aux, const TwoPhaseSample& sample,
                                   const CalibrationOptions& options = {});

/// Sum_i R_i d(w_i, 1/pi_i) with d(a,b) = a log(a/b) - a + b.
double raking_distance(const Vector& weights, const TwoPhaseSample& sample);

/// Covariance from per-subject estimator influences
///   h_i = A_i'gamma + R_i w_i (l_i - A_i'gamma),
/// where l_i are validated-data dfbetas and gamma the w-weighted least-squares fit of l on A
/// over the validated set. Without auxiliaries h_i = R_i w_i l_i.
Matrix sandwich_variance(const Matrix& dfbeta_validated, const TwoPhaseSample& sample,
                         const Vector& weights, const AuxiliaryMatrix* aux);

RakingFit ht_estimate(const Cohort& cohort, const TwoPhaseSample& sample);

RakingFit raking_estimate(const Cohort& cohort, const TwoPhaseSample& sample,
                          const AuxiliaryMatrix& aux, const std::optional<Vector>& warm_start,
                          const CalibrationOptions& options = {});

/// Naive auxiliaries: dfbeta of the unweighted full-cohort fit on (X*, Z, U*, Delta*).
AuxiliaryMatrix build_auxiliary_naive(const Cohort& cohort);

/// Full-cohort Cox fit on the error-prone data together with its dfbeta.
std::pair<CoxFit, InfluenceSet> naive_fit(const Cohort& cohort);

}  // namespace grcox
