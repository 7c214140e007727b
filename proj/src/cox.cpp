#include "grcox/cox.hpp"

#include "grcox/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace grcox {

namespace {

// Subjects with positive weight, sorted by time ascending (ties by index), with covariates
// centered at their weighted mean. Centering leaves beta, score and information unchanged.
struct Prepared {
  std::vector<Eigen::Index> order;
  Matrix xc;  // centered covariates, all N rows
  double weighted_events = 0.0;
};

Prepared prepare(const CoxData& d) {
  const Eigen::Index n = d.time.size();
  const Eigen::Index p = d.covariates.cols();
  if (d.covariates.rows() != n || d.event.size() != n || d.weights.size() != n) {
    throw DimensionError("cox: covariates, time, event and weights must have equal length");
  }
  if (p == 0) throw DimensionError("cox: no covariates");
  if (!d.covariates.allFinite()) throw ParameterError("cox: non-finite covariates");
  if (!d.time.allFinite()) throw ParameterError("cox: non-finite times");

  Prepared out;
  double wsum = 0.0;
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = d.weights[i];
    if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("cox: weights must be finite and >= 0");
    if (d.event[i] != 0.0 && d.event[i] != 1.0) throw ParameterError("cox: events must be 0/1");
    if (w > 0.0) {
      out.order.push_back(i);
      wsum += w;
      mean += w * d.covariates.row(i);
      out.weighted_events += w * d.event[i];
    }
  }
  if (!(wsum > 0.0)) throw ParameterError("cox: weights sum to zero");
  if (!(out.weighted_events > 0.0)) throw NoEventsError("cox: no weighted events");
  mean /= wsum;
  out.xc = d.covariates.rowwise() - mean;
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return d.time[a] < d.time[b]; });
  return out;
}

Vector linear_predictor(const Prepared& prep, const Vector& beta) { return prep.xc * beta; }

PartialLikelihood evaluate(const Prepared& prep, const Vector& beta, const CoxData& d) {
  const Eigen::Index p = prep.xc.cols();
  const Vector eta = linear_predictor(prep, beta);
  double shift = -std::numeric_limits<double>::infinity();
  for (auto i : prep.order) shift = std::max(shift, eta[i]);

  PartialLikelihood out;
  out.score = Vector::Zero(p);
  out.information = Matrix::Zero(p, p);
  out.weighted_events = prep.weighted_events;

  double s0 = 0.0;
  Vector s1 = Vector::Zero(p);
  Matrix s2 = Matrix::Zero(p, p);
  const auto& ord = prep.order;
  std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(ord.size()) - 1;
  while (hi >= 0) {
    std::ptrdiff_t lo = hi;
    const double t = d.time[ord[static_cast<std::size_t>(hi)]];
    while (lo > 0 && d.time[ord[static_cast<std::size_t>(lo - 1)]] == t) --lo;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const auto i = ord[static_cast<std::size_t>(k)];
      const double r = d.weights[i] * std::exp(eta[i] - shift);
      const auto xi = prep.xc.row(i).transpose();
      s0 += r;
      s1.noalias() += r * xi;
      s2.selfadjointView<Eigen::Lower>().rankUpdate(xi, r);
    }
    double dsum = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const auto i = ord[static_cast<std::size_t>(k)];
      if (d.event[i] == 1.0) {
        const double w = d.weights[i];
        dsum += w;
        out.loglik += w * (eta[i] - shift - std::log(s0));
        out.score.noalias() += w * prep.xc.row(i).transpose();
      }
    }
    if (dsum > 0.0) {
      const Vector xbar = s1 / s0;
      out.score.noalias() -= dsum * xbar;
      Matrix s2full = s2.selfadjointView<Eigen::Lower>();
      out.information.noalias() += dsum * (s2full / s0 - xbar * xbar.transpose());
    }
    hi = lo - 1;
  }
  out.information = 0.5 * (out.information + out.information.transpose());
  return out;
}

}  // namespace

PartialLikelihood evaluate_partial_likelihood(const Vector& beta, const CoxData& data) {
  const Prepared prep = prepare(data);
  if (beta.size() != prep.xc.cols()) throw DimensionError("cox: beta length mismatch");
  return evaluate(prep, beta, data);
}

double partial_loglik(const Vector& beta, const CoxData& data) {
  return evaluate_partial_likelihood(beta, data).loglik;
}

Vector partial_score(const Vector& beta, const CoxData& data) {
  return evaluate_partial_likelihood(beta, data).score;
}

CoxFit fit_cox(const CoxData& data, const std::optional<Vector>& init, const CoxOptions& options) {
  const Prepared prep = prepare(data);
  const Eigen::Index p = prep.xc.cols();
  Vector beta = init ? *init : Vector::Zero(p);
  if (beta.size() != p) throw DimensionError("fit_cox: init length mismatch");
  if (!beta.allFinite()) beta.setZero();

  PartialLikelihood cur = evaluate(prep, beta, data);
  const double score_tol = options.score_tol_per_event * prep.weighted_events;

  CoxFit fit;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    Vector step = solve_spd(cur.information, cur.score);
    Vector trial = beta + step;
    PartialLikelihood next = evaluate(prep, trial, data);
    const double slack = 1e-10 * (1.0 + std::abs(cur.loglik));
    int halvings = 0;
    while ((!std::isfinite(next.loglik) || next.loglik < cur.loglik - slack) &&
           halvings < options.max_halvings) {
      step *= 0.5;
      trial = beta + step;
      next = evaluate(prep, trial, data);
      ++halvings;
    }
    beta = trial;
    cur = std::move(next);
    if (cur.score.lpNorm<Eigen::Infinity>() < score_tol &&
        step.lpNorm<Eigen::Infinity>() < options.step_tol) {
      fit.converged = true;
      ++iter;
      break;
    }
  }

  fit.beta = beta;
  fit.score = cur.score;
  fit.information = cur.information;
  fit.loglik = cur.loglik;
  fit.iterations = iter;
  fit.weights_used = data.weights;
  return fit;
}

Matrix score_residuals(const CoxFit& fit, const CoxData& data) {
  if (!fit.converged) throw StateError("score_residuals: fit did not converge");
  const Prepared prep = prepare(data);
  const Eigen::Index n = data.time.size();
  const Eigen::Index p = prep.xc.cols();
  if (fit.beta.size() != p) throw DimensionError("score_residuals: beta length mismatch");

  const Vector eta = linear_predictor(prep, fit.beta);
  double shift = -std::numeric_limits<double>::infinity();
  for (auto i : prep.order) shift = std::max(shift, eta[i]);

  // Per distinct event time: hazard increment and risk-set mean, filled in a descending pass.
  const auto& ord = prep.order;
  const std::size_t m = ord.size();
  std::vector<double> block_dlambda;
  std::vector<Vector> block_xbar;
  std::vector<double> block_time;
  {
    double s0 = 0.0;
    Vector s1 = Vector::Zero(p);
    std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(m) - 1;
    while (hi >= 0) {
      std::ptrdiff_t lo = hi;
      const double t = data.time[ord[static_cast<std::size_t>(hi)]];
      while (lo > 0 && data.time[ord[static_cast<std::size_t>(lo - 1)]] == t) --lo;
      double dsum = 0.0;
      for (std::ptrdiff_t k = lo; k <= hi; ++k) {
        const auto i = ord[static_cast<std::size_t>(k)];
        const double r = data.weights[i] * std::exp(eta[i] - shift);
        s0 += r;
        s1.noalias() += r * prep.xc.row(i).transpose();
        if (data.event[i] == 1.0) dsum += data.weights[i];
      }
      if (dsum > 0.0) {
        block_time.push_back(t);
        block_dlambda.push_back(dsum / s0);
        block_xbar.push_back(s1 / s0);
      }
      hi = lo - 1;
    }
  }
  std::reverse(block_time.begin(), block_time.end());
  std::reverse(block_dlambda.begin(), block_dlambda.end());
  std::reverse(block_xbar.begin(), block_xbar.end());

  // Cumulative hazard and hazard-weighted mean up to each event time.
  const std::size_t nb = block_time.size();
  std::vector<double> cum_lambda(nb);
  std::vector<Vector> cum_xbar(nb);
  double lam = 0.0;
  Vector cx = Vector::Zero(p);
  for (std::size_t k = 0; k < nb; ++k) {
    lam += block_dlambda[k];
    cx += block_dlambda[k] * block_xbar[k];
    cum_lambda[k] = lam;
    cum_xbar[k] = cx;
  }

  Matrix res = Matrix::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = data.time[i];
    // Last event block with time <= t.
    const auto it = std::upper_bound(block_time.begin(), block_time.end(), t);
    const std::ptrdiff_t k = (it - block_time.begin()) - 1;
    const Vector xi = prep.xc.row(i).transpose();
    Vector r = Vector::Zero(p);
    if (k >= 0) {
      const auto kk = static_cast<std::size_t>(k);
      const double risk = std::exp(eta[i] - shift);
      r -= risk * (xi * cum_lambda[kk] - cum_xbar[kk]);
      if (data.event[i] == 1.0 && block_time[kk] == t) r += xi - block_xbar[kk];
    }
    res.row(i) = r.transpose();
  }
  return res;
}

InfluenceSet dfbeta(const CoxFit& fit, const CoxData& data, InfluenceBasis basis) {
  const Matrix res = score_residuals(fit, data);
  const Matrix inv = invert_spd(fit.information);
  InfluenceSet out;
  out.dfbeta = res * inv;
  out.basis = basis;
  return out;
}

}  // namespace grcox
