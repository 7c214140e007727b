#pragma once

#include "grcox/numeric.hpp"

#include <optional>
#include <string>

namespace grcox {

struct CoxOptions {
  int max_iterations = 50;
  int max_halvings = 10;
  double score_tol_per_event = 1e-9;  // scaled by the weighted event count
  double step_tol = 1e-10;
};

/// Weighted Cox fit under the Breslow partial likelihood.
struct CoxFit {
  Vector beta;
  Vector score;
  Matrix information;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  Vector weights_used;
};

/// Survival data handed to the Cox routines; all views must outlive the call.
struct CoxData {
  Eigen::Ref<const Matrix> covariates;
  Eigen::Ref<const Vector> time;
  Eigen::Ref<const Vector> event;
  Eigen::Ref<const Vector> weights;
};

enum class InfluenceBasis { TrueData, ErrorProne, Imputed };

/// Per-subject delta-beta contributions; row i approximates subject i's influence.
struct InfluenceSet {
  Matrix dfbeta;
  InfluenceBasis basis = InfluenceBasis::TrueData;
  int m_index = -1;
};

struct PartialLikelihood {
  double loglik = 0.0;
  Vector score;
  Matrix information;
  double weighted_events = 0.0;
};

/// Validates inputs and evaluates log-likelihood, score and observed information at beta.
PartialLikelihood evaluate_partial_likelihood(const Vector& beta, const CoxData& data);

double partial_loglik(const Vector& beta, const CoxData& data);
Vector partial_score(const Vector& beta, const CoxData& data);

/// Newton-Raphson with step halving. Returns an unconverged fit (converged=false) when the
/// iteration cap is hit; throws NoEventsError / SingularError / ParameterError otherwise.
CoxFit fit_cox(const CoxData& data, const std::optional<Vector>& init = std::nullopt,
               const CoxOptions& options = {});

/// Per-subject score residuals at fit.beta (N x P). Weighted column sums equal the score.
Matrix score_residuals(const CoxFit& fit, const CoxData& data);

/// score_residuals * information^{-1}.
InfluenceSet dfbeta(const CoxFit& fit, const CoxData& data,
                    InfluenceBasis basis = InfluenceBasis::TrueData);

}  // namespace grcox
