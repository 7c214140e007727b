#include <doctest.h>

#include "grcox/calibration.hpp"
#include "grcox/designs.hpp"
#include "grcox/errors.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace grcox;

namespace {

oracle::RakingInstance to_instance(const AuxiliaryMatrix& aux, const TwoPhaseSample& s) {
  const auto idx = s.validated_indices();
  oracle::RakingInstance inst{Matrix(static_cast<Eigen::Index>(idx.size()), aux.a.cols()),
                              Vector(static_cast<Eigen::Index>(idx.size())), aux.totals};
  for (std::size_t k = 0; k < idx.size(); ++k) {
    inst.a_validated.row(static_cast<Eigen::Index>(k)) = aux.a.row(idx[k]);
    inst.d[static_cast<Eigen::Index>(k)] = 1.0 / s.pi[idx[k]];
  }
  return inst;
}

// Random N=200 instance: a correlated pair of auxiliaries on different scales and a
// two-stratum design with unequal probabilities.
std::pair<AuxiliaryMatrix, TwoPhaseSample> random_instance(std::uint64_t seed) {
  RngStream rng(seed, 7);
  const Eigen::Index n = 200;
  Matrix a(n, 2);
  Vector strat(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = rng.normal();
    a(i, 1) = 0.05 * (0.6 * a(i, 0) + rng.normal());
    strat[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  }
  const TwoPhaseSample s = draw_case_control(strat, 80, rng);
  return {AuxiliaryMatrix(a, AuxiliarySource::User).with_intercept(), s};
}

}  // namespace

TEST_CASE("raking weights match an independent root finder") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto [aux, sample] = random_instance(seed);
    const RakingWeights rw = solve_raking_weights(aux, sample);
    const auto idx = sample.validated_indices();
    const Vector ref = oracle::raking_weights(to_instance(aux, sample));
    Vector ours(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) ours[static_cast<Eigen::Index>(k)] = rw.g[idx[k]] / sample.pi[idx[k]];
    CHECK((ours - ref).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(rw.g.minCoeff() > 0.0);
    CHECK(rw.calib_residual.lpNorm<Eigen::Infinity>() < 1e-8 * (1 + aux.totals.lpNorm<Eigen::Infinity>()));

    // The minimizer's distance is no larger than the oracle's feasible point.
    Vector full = Vector::Zero(sample.size());
    Vector full_ref = Vector::Zero(sample.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      full[idx[k]] = ours[static_cast<Eigen::Index>(k)];
      full_ref[idx[k]] = ref[static_cast<Eigen::Index>(k)];
    }
    CHECK(raking_distance(full, sample) <= raking_distance(full_ref, sample) + 1e-6);
  }
}

TEST_CASE("constraints already satisfied give lambda 0") {
  RngStream rng(3, 3);
  SUBCASE("intercept only under SRS") {
    const TwoPhaseSample s = draw_srs(2000, 400, rng);
    const RakingWeights rw = solve_raking_weights(AuxiliaryMatrix(Matrix::Ones(2000, 1), AuxiliarySource::User), s);
    CHECK(rw.lambda.lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((rw.g.array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("census") {
    Matrix a(100, 2);
    for (Eigen::Index i = 0; i < 100; ++i) a.row(i) << rng.normal(), rng.uniform();
    const RakingWeights rw = solve_raking_weights(AuxiliaryMatrix(a, AuxiliarySource::User).with_intercept(),
                                                  testing::census(100));
    CHECK(rw.lambda.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((rw.g.array() == 1.0).all());
  }
}

TEST_CASE("raking failures") {
  RngStream rng(8, 8);
  const TwoPhaseSample s = draw_srs(300, 60, rng);
  SUBCASE("all-zero column is rank deficient") {
    Matrix a(300, 2);
    for (Eigen::Index i = 0; i < 300; ++i) a.row(i) << rng.normal(), 0.0;
    CHECK_THROWS_AS(solve_raking_weights(AuxiliaryMatrix(a, AuxiliarySource::User), s), RankError);
  }
  SUBCASE("infeasible totals") {
    Matrix a(300, 1);
    for (Eigen::Index i = 0; i < 300; ++i) a(i, 0) = s.r[i] ? 1.0 : -10.0;
    try {
      solve_raking_weights(AuxiliaryMatrix(a, AuxiliarySource::User), s);
      FAIL("expected CalibrationFailure");
    } catch (const CalibrationFailure& e) {
      CHECK(e.worst_constraint() == 0);
    }
  }
  SUBCASE("empty validation sample") {
    TwoPhaseSample empty;
    empty.r = Eigen::VectorXi::Zero(300);
    empty.pi = Vector::Constant(300, 0.2);
    CHECK_THROWS_AS(solve_raking_weights(AuxiliaryMatrix(Matrix::Ones(300, 1), AuxiliarySource::User), empty),
                    DesignError);
    const Cohort c = testing::simulated_cohort(300, 1, 4);
    CHECK_THROWS_AS(ht_estimate(c, empty), DesignError);
  }
}

TEST_CASE("full validation collapses to the true-data fit") {
  const Cohort c = testing::simulated_cohort(1500, 1, 21);
  const TwoPhaseSample s = testing::census(1500);
  const CoxFit truth = testing::true_fit(c);

  const RakingFit ht = ht_estimate(c, s);
  CHECK((ht.beta - truth.beta).lpNorm<Eigen::Infinity>() < 1e-12);

  const RakingFit grn = raking_estimate(c, s, build_auxiliary_naive(c).with_intercept(), ht.beta);
  CHECK(grn.lambda.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((grn.beta - truth.beta).lpNorm<Eigen::Infinity>() < 1e-12);

  SUBCASE("HT covariance is the robust information sandwich") {
    Matrix cov(1500, 2);
    cov << *c.x_true, c.z;
    const oracle::SurvData d{cov, *c.u_true, *c.delta_true, Vector::Ones(1500)};
    const Matrix info = oracle::breslow_information(ht.beta, d);
    const Matrix res = oracle::breslow_score_residuals(ht.beta, d);
    const Matrix inv = info.inverse();
    const Matrix robust = inv * (res.transpose() * res) * inv;
    CHECK((ht.covariance - robust).lpNorm<Eigen::Infinity>() < 1e-8 * robust.lpNorm<Eigen::Infinity>());
  }
}

TEST_CASE("raking estimate properties") {
  const Cohort c = testing::simulated_cohort(2000, 1, 99);
  RngStream rng(99, 3);
  const TwoPhaseSample s = draw_srs(2000, 400, rng);
  const AuxiliaryMatrix naive = build_auxiliary_naive(c);
  CHECK(naive.a.colwise().sum().lpNorm<Eigen::Infinity>() < 1e-8 * 2000 * naive.a.cwiseAbs().maxCoeff());

  const RakingFit ht = ht_estimate(c, s);
  const RakingFit fit = raking_estimate(c, s, naive.with_intercept(), ht.beta);
  CHECK(fit.weights.minCoeff() >= 0.0);
  for (auto i : s.validated_indices()) CHECK(fit.weights[i] > 0.0);
  CHECK(fit.g_range.first > 0.0);
  CHECK(fit.calib_residual.lpNorm<Eigen::Infinity>() < 1e-8 * (1 + naive.with_intercept().totals.lpNorm<Eigen::Infinity>()));
  const Eigen::SelfAdjointEigenSolver<Matrix> es(fit.covariance);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  CHECK((fit.covariance - fit.covariance.transpose()).lpNorm<Eigen::Infinity>() < 1e-15);

  SUBCASE("affine invariance of the point estimate") {
    Matrix m(2, 2);
    m << 2.0, 0.5, -1.0, 3.0;
    Matrix a = naive.a * m;
    a.col(0).array() += 0.3;
    a.col(1).array() -= 1.7;
    const RakingFit moved = raking_estimate(c, s, AuxiliaryMatrix(a, AuxiliarySource::User).with_intercept(), ht.beta);
    CHECK((moved.beta - fit.beta).lpNorm<Eigen::Infinity>() < 1e-8);
  }
  SUBCASE("no-error cohort: naive auxiliaries are the true dfbeta") {
    const Cohort clean = testing::simulated_cohort(1000, 0, 5);
    Matrix cov(1000, 2);
    cov << *clean.x_true, clean.z;
    const Vector w = Vector::Ones(1000);
    const CoxData data{cov, *clean.u_true, *clean.delta_true, w};
    const CoxFit tf = fit_cox(data);
    CHECK((build_auxiliary_naive(clean).a - dfbeta(tf, data).dfbeta).lpNorm<Eigen::Infinity>() == 0.0);
  }
}
