#include "grcox/glm.hpp"

#include "grcox/errors.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace grcox {

namespace {

constexpr double kSeparationBound = 30.0;
// A singular IRLS system with fitted probabilities this close to 0/1 is read as separation.
constexpr double kSaturationBound = 10.0;

void check_rank(const Matrix& v) {
  Eigen::ColPivHouseholderQR<Matrix> qr(v);
  qr.setThreshold(1e-10);
  if (qr.rank() < v.cols()) {
    std::ostringstream os;
    os << "fit_glm: design has rank " << qr.rank() << " < " << v.cols() << " columns";
    throw RankError(os.str());
  }
}

}  // namespace

GlmFit fit_glm(const Matrix& design, const Vector& response, GlmKind kind,
               const std::optional<Vector>& ipw) {
  if (design.rows() != response.size()) throw DimensionError("fit_glm: design/response length mismatch");
  if (ipw && ipw->size() != response.size()) throw DimensionError("fit_glm: weight length mismatch");
  if (!design.allFinite() || !response.allFinite()) throw ParameterError("fit_glm: non-finite input");

  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    if (!ipw) {
      rows.push_back(i);
    } else {
      const double w = (*ipw)[i];
      if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("fit_glm: weights must be finite and >= 0");
      if (w > 0.0) rows.push_back(i);
    }
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index p = design.cols();
  if (n <= p) {
    throw ParameterError("fit_glm: " + std::to_string(n) + " observations for " + std::to_string(p) +
                         " parameters");
  }
  Matrix v(n, p);
  Vector y(n);
  Vector w = Vector::Ones(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    v.row(k) = design.row(rows[static_cast<std::size_t>(k)]);
    y[k] = response[rows[static_cast<std::size_t>(k)]];
    if (ipw) w[k] = (*ipw)[rows[static_cast<std::size_t>(k)]];
  }
  w *= static_cast<double>(n) / w.sum();
  check_rank(v);

  GlmFit fit;
  fit.kind = kind;
  fit.n_obs = n;
  fit.n_params = p;
  if (ipw) fit.weights = *ipw;
  const double dof = static_cast<double>(n - p);

  if (kind == GlmKind::Linear) {
    const Vector sw = w.cwiseSqrt();
    const Matrix vw = sw.asDiagonal() * v;
    fit.coefficients = vw.colPivHouseholderQr().solve(sw.cwiseProduct(y));
    const Vector resid = y - v * fit.coefficients;
    fit.tau2_hat = resid.cwiseAbs2().dot(w) / dof;
    fit.xtx_inverse = invert_spd(vw.transpose() * vw);
    fit.iterations = 1;
    return fit;
  }

  for (Eigen::Index k = 0; k < n; ++k) {
    if (y[k] != 0.0 && y[k] != 1.0) throw ParameterError("fit_glm: logistic response must be 0/1");
  }
  Vector beta = Vector::Zero(p);
  Vector eta = Vector::Zero(n);
  Vector mu(n);
  fit.converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    Vector wk(n);
    Vector zk(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      mu[k] = expit(eta[k]);
      const double var = std::max(mu[k] * (1.0 - mu[k]), 1e-300);
      wk[k] = w[k] * var;
      zk[k] = eta[k] + (y[k] - mu[k]) / var;
    }
    const Matrix xtwx = v.transpose() * wk.asDiagonal() * v;
    Vector next;
    try {
      next = solve_spd(xtwx, Vector(v.transpose() * wk.cwiseProduct(zk)));
    } catch (const SingularError&) {
      if (!fit.separation && eta.lpNorm<Eigen::Infinity>() <= kSaturationBound) throw;
      fit.separation = true;
      break;
    }
    const double change = (next - beta).lpNorm<Eigen::Infinity>();
    beta = next;
    eta = v * beta;
    fit.iterations = iter + 1;
    if (eta.lpNorm<Eigen::Infinity>() > kSeparationBound) fit.separation = true;
    if (change < 1e-10 * (1.0 + beta.lpNorm<Eigen::Infinity>())) {
      fit.converged = true;
      break;
    }
  }
  fit.coefficients = beta;
  double ss = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double m = expit(eta[k]);
    const double var = std::max(m * (1.0 - m), 1e-300);
    const double r = (y[k] - m) / var;
    ss += w[k] * r * r;
  }
  fit.tau2_hat = ss / dof;
  fit.xtx_inverse = invert_spd(v.transpose() * w.asDiagonal() * v);
  return fit;
}

GlmDraw posterior_draw(const GlmFit& fit, RngStream& rng) {
  const Eigen::Index dof = fit.n_obs - fit.n_params;
  if (dof < 1) throw ParameterError("posterior_draw: need more observations than parameters");
  GlmDraw out;
  out.coefficients = fit.coefficients;
  if (fit.tau2_hat == 0.0) return out;
  out.tau2 = draw_scaled_inverse_chisq(fit.tau2_hat, static_cast<long>(dof), rng);
  const Matrix l = cholesky_lower(fit.xtx_inverse);
  Vector z(fit.n_params);
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
  out.coefficients += std::sqrt(out.tau2) * (l * z);
  return out;
}

}  // namespace grcox
