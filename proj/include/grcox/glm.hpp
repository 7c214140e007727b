#pragma once

#include "grcox/numeric.hpp"

#include <optional>

namespace grcox {

enum class GlmKind { Logistic, Linear };

struct GlmFit {
  GlmKind kind = GlmKind::Linear;
  Vector coefficients;
  Matrix xtx_inverse;  // (V'WV)^{-1}; W = 1 for unweighted fits, IPW normalized to mean 1 otherwise
  double tau2_hat = 0.0;
  Eigen::Index n_obs = 0;
  Eigen::Index n_params = 0;
  std::optional<Vector> weights;
  bool separation = false;  // |linear predictor| exceeded 30 on the fitting path
  int iterations = 0;
  bool converged = true;
};

struct GlmDraw {
  Vector coefficients;
  double tau2 = 0.0;
};

/// Logistic regression by IRLS or linear regression by weighted least squares.
/// tau2_hat is the mean squared working residual (logistic) or the residual variance
/// (linear), both normalized by n_obs - n_params. Rows with zero weight are ignored.
GlmFit fit_glm(const Matrix& design, const Vector& response, GlmKind kind,
               const std::optional<Vector>& ipw = std::nullopt);

/// tau2 = tau2_hat (n-p) / chi2_{n-p}; coefficients ~ N(coef, tau2 * xtx_inverse).
GlmDraw posterior_draw(const GlmFit& fit, RngStream& rng);

}  // namespace grcox
