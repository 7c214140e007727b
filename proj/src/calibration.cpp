#include "grcox/calibration.hpp"

#include "grcox/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace grcox {

std::string to_string(AuxiliarySource s) {
  switch (s) {
    case AuxiliarySource::GRN: return "GRN";
    case AuxiliarySource::GRMI: return "GRMI";
    case AuxiliarySource::GRFCSMI: return "GRFCSMI";
    case AuxiliarySource::IFImputed: return "IF-imputed";
    case AuxiliarySource::User: return "user";
  }
  return "user";
}

AuxiliaryMatrix::AuxiliaryMatrix(Matrix values, AuxiliarySource src)
    : a(std::move(values)), source(src), totals(a.colwise().sum().transpose()) {
  if (!a.allFinite()) throw ParameterError("AuxiliaryMatrix: non-finite entries");
}

AuxiliaryMatrix AuxiliaryMatrix::with_intercept() const {
  Matrix out(a.rows(), a.cols() + 1);
  out << a, Vector::Ones(a.rows());
  return AuxiliaryMatrix(std::move(out), source);
}

namespace {

struct DualState {
  double objective = 0.0;
  Vector gradient;  // calibration residual on the scaled auxiliaries
  Matrix hessian;
};

DualState dual_state(const Matrix& bv, const Vector& dv, const Vector& target,
                     const Vector& lambda) {
  const Vector eta = bv * lambda;
  const Vector wg = dv.array() * eta.array().exp();
  DualState s;
  // Shifted by the constant sum(dv) so the value stays small near lambda = 0.
  s.objective = (dv.array() * eta.array().unaryExpr([](double e) { return std::expm1(e); })).sum() -
                lambda.dot(target);
  s.gradient = bv.transpose() * wg - target;
  s.hessian = bv.transpose() * wg.asDiagonal() * bv;
  return s;
}

double relative_residual(const Vector& resid_scaled, const Vector& scale, double total_norm) {
  // Residual back on the caller's scale: column j was multiplied by scale[j].
  const Vector orig = resid_scaled.cwiseQuotient(scale);
  return orig.lpNorm<Eigen::Infinity>() / (1.0 + total_norm);
}

}  // namespace

RakingWeights solve_raking_weights(const AuxiliaryMatrix& aux, const TwoPhaseSample& sample,
                                   const CalibrationOptions& options) {
  const Eigen::Index n = aux.a.rows();
  const Eigen::Index k = aux.a.cols();
  if (sample.size() != n) throw DimensionError("solve_raking_weights: sample/auxiliary size mismatch");
  if (k == 0) throw DimensionError("solve_raking_weights: no auxiliary columns");
  const auto idx = sample.validated_indices();
  if (idx.empty()) throw DesignError("solve_raking_weights: empty validation sample");

  // Column scaling keeps the Newton system well conditioned when auxiliaries are ~1/N.
  Vector scale(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double rms = std::sqrt(aux.a.col(j).squaredNorm() / static_cast<double>(n));
    scale[j] = rms > 0.0 ? 1.0 / rms : 1.0;
  }
  const Matrix av = select_rows(aux.a, idx);
  const Matrix bv = av * scale.asDiagonal();
  {
    Eigen::ColPivHouseholderQR<Matrix> qr(bv);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) {
      std::ostringstream os;
      os << "solve_raking_weights: auxiliary matrix has rank " << qr.rank() << " < " << k
         << " on the validated subset";
      throw RankError(os.str());
    }
  }
  Vector dv(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) dv[static_cast<Eigen::Index>(r)] = 1.0 / sample.pi[idx[r]];

  const Vector totals = aux.a.colwise().sum().transpose();
  const double total_norm = totals.lpNorm<Eigen::Infinity>();
  const Vector target = totals.cwiseProduct(scale);

  Vector lambda = Vector::Zero(k);
  DualState st = dual_state(bv, dv, target, lambda);
  int iter = 0;
  double rel = relative_residual(st.gradient, scale, total_norm);
  const double aim = std::min(options.tolerance * 1e-4, 1e-13);
  while (rel > aim && iter < options.max_iterations) {
    ++iter;
    Vector step;
    try {
      step = solve_spd(st.hessian, Vector(-st.gradient));
    } catch (const SingularError&) {
      break;
    }
    const double slope = st.gradient.dot(step);
    double t = 1.0;
    DualState next = dual_state(bv, dv, target, lambda + step);
    auto acceptable = [&](const DualState& cand) {
      if (!std::isfinite(cand.objective)) return false;
      return cand.objective <= st.objective + 1e-4 * t * slope || cand.gradient.norm() < st.gradient.norm();
    };
    while (!acceptable(next) && t > 1e-12) {
      t *= 0.5;
      next = dual_state(bv, dv, target, lambda + t * step);
    }
    if (!std::isfinite(next.objective)) break;
    const double new_rel = relative_residual(next.gradient, scale, total_norm);
    const bool stalled = (t * step).lpNorm<Eigen::Infinity>() < 1e-15 * (1.0 + lambda.lpNorm<Eigen::Infinity>());
    lambda += t * step;
    st = std::move(next);
    rel = new_rel;
    if (stalled) break;
  }

  const Vector resid_orig = st.gradient.cwiseQuotient(scale);
  Eigen::Index worst = 0;
  resid_orig.cwiseAbs().maxCoeff(&worst);
  if (!(rel < options.tolerance)) {
    std::ostringstream os;
    os << "raking calibration did not converge after " << iter << " iterations (constraint "
       << worst << " residual " << resid_orig[worst] << ")";
    throw CalibrationFailure(os.str(), static_cast<int>(worst), resid_orig[worst]);
  }

  RakingWeights out;
  out.lambda = lambda.cwiseProduct(scale);
  out.g = (aux.a * out.lambda).array().exp();
  out.calib_residual = resid_orig;
  out.iterations = iter;
  double gmax = 0.0;
  for (auto i : idx) gmax = std::max(gmax, out.g[i]);
  if (!(gmax <= options.g_cap)) {
    std::ostringstream os;
    os << "raking weight ratio g exceeds cap " << options.g_cap << " (max " << gmax << ")";
    throw CalibrationFailure(os.str(), static_cast<int>(worst), resid_orig[worst]);
  }
  return out;
}

double raking_distance(const Vector& weights, const TwoPhaseSample& sample) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    if (sample.r[i] != 1) continue;
    const double a = weights[i];
    const double b = 1.0 / sample.pi[i];
    total += (a > 0.0 ? a * std::log(a / b) : 0.0) - a + b;
  }
  return total;
}

Matrix sandwich_variance(const Matrix& dfbeta_validated, const TwoPhaseSample& sample,
                         const Vector& weights, const AuxiliaryMatrix* aux) {
  const auto idx = sample.validated_indices();
  if (dfbeta_validated.rows() != static_cast<Eigen::Index>(idx.size())) {
    throw DimensionError("sandwich_variance: dfbeta rows must match the validated count");
  }
  if (weights.size() != sample.size()) throw DimensionError("sandwich_variance: weight length mismatch");
  Vector wv(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) wv[static_cast<Eigen::Index>(r)] = weights[idx[r]];

  if (aux == nullptr) {
    const Matrix h = wv.asDiagonal() * dfbeta_validated;
    Matrix cov = h.transpose() * h;
    return 0.5 * (cov + cov.transpose());
  }

  if (aux->a.rows() != sample.size()) throw DimensionError("sandwich_variance: auxiliary size mismatch");
  const Matrix av = select_rows(aux->a, idx);
  const Vector sw = wv.cwiseSqrt();
  const Matrix gamma =
      (sw.asDiagonal() * av).colPivHouseholderQr().solve(sw.asDiagonal() * dfbeta_validated);
  Matrix h = aux->a * gamma;  // N x P
  const Matrix fitted_v = av * gamma;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto rr = static_cast<Eigen::Index>(r);
    h.row(idx[r]) += wv[rr] * (dfbeta_validated.row(rr) - fitted_v.row(rr));
  }
  Matrix cov = h.transpose() * h;
  return 0.5 * (cov + cov.transpose());
}

namespace {

RakingFit fit_weighted(const Cohort& cohort, const TwoPhaseSample& sample, const Vector& weights,
                       const std::optional<Vector>& warm_start, const AuxiliaryMatrix* aux) {
  TruthView truth(cohort, sample);
  const auto& idx = truth.validated();
  if (idx.empty()) throw DesignError("estimate: empty validation sample");
  const Matrix xv = truth.validated_covariates();
  const Vector tv = truth.validated_time();
  const Vector ev = truth.validated_event();
  const Vector wv = select_rows(weights, idx);

  const CoxData data{xv, tv, ev, wv};
  RakingFit out;
  out.cox = fit_cox(data, warm_start);
  if (!out.cox.converged) throw StateError("weighted Cox fit did not converge");
  out.beta = out.cox.beta;
  out.weights = weights;
  out.dfbeta_validated = dfbeta(out.cox, data).dfbeta;
  out.covariance = sandwich_variance(out.dfbeta_validated, sample, weights, aux);
  return out;
}

}  // namespace

RakingFit ht_estimate(const Cohort& cohort, const TwoPhaseSample& sample) {
  sample.validate(cohort.size(), 1);
  Vector w = Vector::Zero(cohort.size());
  for (Eigen::Index i = 0; i < cohort.size(); ++i) {
    if (sample.r[i] == 1) w[i] = 1.0 / sample.pi[i];
  }
  return fit_weighted(cohort, sample, w, std::nullopt, nullptr);
}

RakingFit raking_estimate(const Cohort& cohort, const TwoPhaseSample& sample,
                          const AuxiliaryMatrix& aux, const std::optional<Vector>& warm_start,
                          const CalibrationOptions& options) {
  sample.validate(cohort.size(), 1);
  const RakingWeights rw = solve_raking_weights(aux, sample, options);
  Vector w = Vector::Zero(cohort.size());
  double gmin = std::numeric_limits<double>::infinity();
  double gmax = 0.0;
  for (Eigen::Index i = 0; i < cohort.size(); ++i) {
    if (sample.r[i] == 1) {
      w[i] = rw.g[i] / sample.pi[i];
      gmin = std::min(gmin, rw.g[i]);
      gmax = std::max(gmax, rw.g[i]);
    }
  }
  RakingFit out = fit_weighted(cohort, sample, w, warm_start, &aux);
  out.lambda = rw.lambda;
  out.calib_residual = rw.calib_residual;
  out.g_range = {gmin, gmax};
  return out;
}

std::pair<CoxFit, InfluenceSet> naive_fit(const Cohort& cohort) {
  const Matrix cov = cohort.error_prone_covariates();
  const Vector w = Vector::Ones(cohort.size());
  const CoxData data{cov, cohort.u_star, cohort.delta_star, w};
  CoxFit fit = fit_cox(data);
  if (!fit.converged) throw StateError("naive full-cohort Cox fit did not converge");
  InfluenceSet inf = dfbeta(fit, data, InfluenceBasis::ErrorProne);
  return {std::move(fit), std::move(inf)};
}

AuxiliaryMatrix build_auxiliary_naive(const Cohort& cohort) {
  auto [fit, inf] = naive_fit(cohort);
  return AuxiliaryMatrix(std::move(inf.dfbeta), AuxiliarySource::GRN);
}

}  // namespace grcox
