#include "grcox/imputation.hpp"

#include "grcox/errors.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace grcox {

namespace {

Vector draw_delta(const Matrix& v, const Vector& coef, RngStream& rng) {
  const Vector eta = v * coef;
  Vector out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) out[i] = rng.bernoulli(expit(eta[i])) ? 1.0 : 0.0;
  return out;
}

Vector draw_gaussian(const Matrix& v, const GlmDraw& draw, RngStream& rng) {
  Vector out = v * draw.coefficients;
  const double sd = std::sqrt(draw.tau2);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += sd * rng.normal();
  return out;
}

ModelSpec spec_of(std::vector<Role> predictors, bool interactions, bool od, bool ox, bool ou) {
  ModelSpec s;
  s.predictors = std::move(predictors);
  s.interactions = interactions;
  s.overlay_delta = od;
  s.overlay_x = ox;
  s.overlay_u = ou;
  return s;
}

struct ValidatedTruth {
  std::vector<Eigen::Index> idx;
  Vector delta;
  Matrix x;
  Vector r;  // U* - U
};

ValidatedTruth validated_truth(const Cohort& cohort, const TwoPhaseSample& sample) {
  TruthView truth(cohort, sample);
  ValidatedTruth out;
  out.idx = truth.validated();
  if (out.idx.empty()) throw DesignError("imputation: empty validation sample");
  const auto n = static_cast<Eigen::Index>(out.idx.size());
  out.delta.resize(n);
  out.x.resize(n, cohort.p());
  out.r.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = out.idx[static_cast<std::size_t>(k)];
    out.delta[k] = truth.delta(i);
    out.x.row(k) = truth.x(i);
    out.r[k] = cohort.u_star[i] - truth.u(i);
  }
  const double events = out.delta.sum();
  if (events == 0.0 || events == static_cast<double>(n)) {
    throw DesignError("imputation: validation sample must contain both events and non-events");
  }
  return out;
}

void note_separation(const GlmFit& fit, int& count) {
  if (fit.separation) ++count;
}

void add_separation_warning(std::vector<std::string>& warnings, int count, const char* what) {
  if (count == 0) return;
  std::ostringstream os;
  os << what << ": separation detected in " << count << " imputation model fit(s)";
  warnings.push_back(os.str());
}

}  // namespace

std::pair<CoxFit, Matrix> fit_imputed_cox(const Cohort& cohort, const ImputedOverlay& overlay,
                                          const std::optional<Vector>& warm_start) {
  const Eigen::Index n = cohort.size();
  const Matrix& xh = overlay.x_hat ? *overlay.x_hat : cohort.x_star;
  const Vector& uh = overlay.u_hat ? *overlay.u_hat : cohort.u_star;
  if (uh.maxCoeff() <= 0.0) throw ParameterError("imputed follow-up times are all <= 0");
  Matrix cov(n, cohort.p() + cohort.q());
  cov << xh, cohort.z;
  const Vector w = Vector::Ones(n);
  const CoxData data{cov, uh, overlay.delta_hat, w};
  CoxFit fit = fit_cox(data, warm_start);
  if (!fit.converged) throw StateError("Cox fit on imputed data did not converge");
  InfluenceSet inf = dfbeta(fit, data, InfluenceBasis::Imputed);
  return {std::move(fit), std::move(inf.dfbeta)};
}

ImputationResult grmi_auxiliary(const Cohort& cohort, const TwoPhaseSample& sample, int m_count,
                                bool interactions, RngStream& rng) {
  if (m_count < 1) throw ParameterError("grmi_auxiliary: M must be >= 1");
  const ValidatedTruth vt = validated_truth(cohort, sample);
  const Matrix v = build_design_matrix(
      cohort, spec_of({Role::Delta, Role::X, Role::U, Role::Z}, interactions, false, false, false));
  const GlmFit fit = fit_glm(select_rows(v, vt.idx), vt.delta, GlmKind::Logistic);

  ImputationResult out;
  if (fit.separation) out.warnings.push_back("GRMI: separation detected in the event imputation model");
  Matrix sum;
  std::optional<Vector> warm;
  for (int m = 0; m < m_count; ++m) {
    RngStream r = rng.substream(static_cast<std::uint64_t>(m) + 1);
    ImputedOverlay ov;
    ov.m_index = m;
    for (int attempt = 0; attempt < 2; ++attempt) {
      const GlmDraw draw = posterior_draw(fit, r);
      ov.delta_hat = draw_delta(v, draw.coefficients, r);
      if (ov.delta_hat.sum() > 0.0) break;
    }
    if (ov.delta_hat.sum() == 0.0) throw NoEventsError("GRMI: imputation produced no events twice");
    ov.x_hat = cohort.x_star;
    ov.u_hat = cohort.u_star;
    auto [cox, df] = fit_imputed_cox(cohort, ov, warm);
    warm = cox.beta;
    if (m == 0) {
      sum = df;
    } else {
      sum += df;
    }
    out.dfbetas.push_back(std::move(df));
    out.overlays.push_back(std::move(ov));
  }
  out.aux = AuxiliaryMatrix(sum / static_cast<double>(m_count), AuxiliarySource::GRMI);
  return out;
}

ImputationResult fcsmi_auxiliary(const Cohort& cohort, const TwoPhaseSample& sample, int m_count,
                                 int l_count, FcsVariables vars, bool interactions, RngStream& rng) {
  if (m_count < 1) throw ParameterError("fcsmi_auxiliary: M must be >= 1");
  if (l_count < 0) throw ParameterError("fcsmi_auxiliary: L must be >= 0");
  const ValidatedTruth vt = validated_truth(cohort, sample);
  const bool impute_u = vars != FcsVariables::Delta;
  const bool impute_x = vars == FcsVariables::DeltaUX;
  const Eigen::Index p = cohort.p();
  const auto& idx = vt.idx;

  const Matrix v0 = build_design_matrix(
      cohort, spec_of({Role::Delta, Role::X, Role::U, Role::Z}, interactions, false, false, false));
  const Matrix v0_no_u = build_design_matrix(
      cohort, spec_of({Role::Delta, Role::X, Role::Z}, interactions, false, false, false));
  const Matrix v0_val = select_rows(v0, idx);
  const GlmFit delta0 = fit_glm(v0_val, vt.delta, GlmKind::Logistic);
  std::vector<GlmFit> x0;
  if (impute_x) {
    for (Eigen::Index j = 0; j < p; ++j) x0.push_back(fit_glm(v0_val, vt.x.col(j), GlmKind::Linear));
  }
  std::optional<GlmFit> r0;
  if (impute_u) r0 = fit_glm(select_rows(v0_no_u, idx), vt.r, GlmKind::Linear);

  const ModelSpec spec_delta =
      spec_of({Role::Delta, Role::X, Role::U, Role::Z}, interactions, false, true, true);
  const ModelSpec spec_x =
      spec_of({Role::Delta, Role::X, Role::U, Role::Z}, interactions, true, false, true);
  const ModelSpec spec_u = spec_of({Role::Delta, Role::X, Role::Z}, interactions, true, true, false);

  ImputationResult out;
  int separations = delta0.separation ? 1 : 0;
  Matrix sum;
  std::optional<Vector> warm;
  for (int m = 0; m < m_count; ++m) {
    RngStream r = rng.substream(static_cast<std::uint64_t>(m) + 1);
    ImputedOverlay ov;
    ov.m_index = m;
    ov.delta_hat = draw_delta(v0, posterior_draw(delta0, r).coefficients, r);
    ov.x_hat = cohort.x_star;
    if (impute_x) {
      for (Eigen::Index j = 0; j < p; ++j) {
        ov.x_hat->col(j) = draw_gaussian(v0, posterior_draw(x0[static_cast<std::size_t>(j)], r), r);
      }
    }
    ov.u_hat = cohort.u_star;
    if (impute_u) *ov.u_hat = cohort.u_star - draw_gaussian(v0_no_u, posterior_draw(*r0, r), r);

    GlmFit delta_fit = delta0;
    Matrix v_delta = v0;
    for (int l = 1; l <= l_count; ++l) {
      if (impute_u || impute_x) {
        v_delta = build_design_matrix(cohort, spec_delta, &ov);
        delta_fit = fit_glm(select_rows(v_delta, idx), vt.delta, GlmKind::Logistic);
        note_separation(delta_fit, separations);
      }
      ov.delta_hat = draw_delta(v_delta, posterior_draw(delta_fit, r).coefficients, r);
      if (impute_x) {
        const Matrix v_x = build_design_matrix(cohort, spec_x, &ov);
        const Matrix v_x_val = select_rows(v_x, idx);
        for (Eigen::Index j = 0; j < p; ++j) {
          const GlmFit fx = fit_glm(v_x_val, vt.x.col(j), GlmKind::Linear);
          ov.x_hat->col(j) = draw_gaussian(v_x, posterior_draw(fx, r), r);
        }
      }
      if (impute_u) {
        const Matrix v_u = build_design_matrix(cohort, spec_u, &ov);
        const GlmFit fu = fit_glm(select_rows(v_u, idx), vt.r, GlmKind::Linear);
        *ov.u_hat = cohort.u_star - draw_gaussian(v_u, posterior_draw(fu, r), r);
      }
    }
    if (ov.delta_hat.sum() == 0.0) {
      ov.delta_hat = draw_delta(v_delta, posterior_draw(delta_fit, r).coefficients, r);
      if (ov.delta_hat.sum() == 0.0) throw NoEventsError("GRFCSMI: imputation produced no events twice");
    }

    auto [cox, df] = fit_imputed_cox(cohort, ov, warm);
    warm = cox.beta;
    if (m == 0) {
      sum = df;
    } else {
      sum += df;
    }
    out.dfbetas.push_back(std::move(df));
    out.overlays.push_back(std::move(ov));
  }
  add_separation_warning(out.warnings, separations, "GRFCSMI");
  out.aux = AuxiliaryMatrix(sum / static_cast<double>(m_count), AuxiliarySource::GRFCSMI);
  return out;
}

IfCalibrationResult if_calibration_auxiliary(const Cohort& cohort, const TwoPhaseSample& sample,
                                             const ImputationResult& base,
                                             const Matrix& true_dfbeta_validated) {
  if (base.overlays.empty() || base.overlays.size() != base.dfbetas.size()) {
    throw StateError("if_calibration_auxiliary: base imputations missing");
  }
  const auto idx = sample.validated_indices();
  const auto nv = static_cast<Eigen::Index>(idx.size());
  if (true_dfbeta_validated.rows() != nv) {
    throw DimensionError("if_calibration_auxiliary: true dfbeta rows must match validated count");
  }
  const Eigen::Index n = cohort.size();
  const Eigen::Index pq = true_dfbeta_validated.cols();
  const Eigen::Index p = cohort.p();
  const Eigen::Index q = cohort.q();
  Vector ipw = Vector::Zero(n);
  for (auto i : idx) ipw[i] = 1.0 / sample.pi[i];
  const Vector ipw_val = select_rows(ipw, idx);

  std::vector<std::string> names{"intercept", "l_hat", "delta_hat", "u_hat"};
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x_hat" + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < q; ++j) names.push_back("z" + std::to_string(j + 1));
  const std::size_t main_count = names.size();
  for (std::size_t c = 2; c < main_count; ++c) names.push_back("l_hat*" + names[c]);

  std::set<std::string> dropped;
  Matrix sum = Matrix::Zero(n, pq);
  const auto m_count = static_cast<Eigen::Index>(base.overlays.size());
  for (std::size_t m = 0; m < base.overlays.size(); ++m) {
    const ImputedOverlay& ov = base.overlays[m];
    const Matrix& lhat = base.dfbetas[m];
    if (lhat.rows() != n || lhat.cols() != pq) throw DimensionError("if_calibration_auxiliary: dfbeta shape");
    const Matrix& xh = ov.x_hat ? *ov.x_hat : cohort.x_star;
    const Vector& uh = ov.u_hat ? *ov.u_hat : cohort.u_star;
    Matrix mains(n, static_cast<Eigen::Index>(main_count) - 2);
    mains << ov.delta_hat, uh, xh, cohort.z;

    for (Eigen::Index k = 0; k < pq; ++k) {
      Matrix d(n, static_cast<Eigen::Index>(names.size()));
      d.col(0).setOnes();
      d.col(1) = lhat.col(k);
      d.middleCols(2, mains.cols()) = mains;
      d.rightCols(mains.cols()) = mains.array().colwise() * lhat.col(k).array();

      Matrix dv = select_rows(d, idx);
      std::vector<Eigen::Index> keep;
      {
        Eigen::ColPivHouseholderQR<Matrix> qr(dv);
        qr.setThreshold(1e-10);
        if (qr.rank() == dv.cols()) {
          for (Eigen::Index c = 0; c < dv.cols(); ++c) keep.push_back(c);
        } else {
          for (Eigen::Index c = 0; c < dv.cols(); ++c) {
            std::vector<Eigen::Index> trial = keep;
            trial.push_back(c);
            Matrix sub(nv, static_cast<Eigen::Index>(trial.size()));
            for (std::size_t t = 0; t < trial.size(); ++t) sub.col(static_cast<Eigen::Index>(t)) = dv.col(trial[t]);
            Eigen::ColPivHouseholderQR<Matrix> qs(sub);
            qs.setThreshold(1e-10);
            if (qs.rank() == sub.cols()) {
              keep = std::move(trial);
            } else {
              dropped.insert("coefficient " + std::to_string(k + 1) + ": " +
                             names[static_cast<std::size_t>(c)]);
            }
          }
        }
      }
      Matrix dk(n, static_cast<Eigen::Index>(keep.size()));
      for (std::size_t t = 0; t < keep.size(); ++t) dk.col(static_cast<Eigen::Index>(t)) = d.col(keep[t]);
      const GlmFit fit = fit_glm(select_rows(dk, idx), true_dfbeta_validated.col(k), GlmKind::Linear, ipw_val);
      sum.col(k) += dk * fit.coefficients;
    }
  }
  IfCalibrationResult out;
  out.aux = AuxiliaryMatrix(sum / static_cast<double>(m_count), AuxiliarySource::IFImputed);
  out.dropped_columns.assign(dropped.begin(), dropped.end());
  return out;
}

}  // namespace grcox
