#include <doctest.h>

#include "grcox/errors.hpp"
#include "grcox/glm.hpp"

#include <cmath>

using namespace grcox;

namespace {

// Plain Newton-Raphson on the logistic log-likelihood.
Vector logistic_newton(const Matrix& x, const Vector& y) {
  Vector b = Vector::Zero(x.cols());
  for (int it = 0; it < 100; ++it) {
    Vector mu(x.rows());
    Vector w(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      mu[i] = 1.0 / (1.0 + std::exp(-x.row(i).dot(b)));
      w[i] = mu[i] * (1.0 - mu[i]);
    }
    const Matrix h = x.transpose() * w.asDiagonal() * x;
    const Vector step = h.ldlt().solve(x.transpose() * (y - mu));
    b += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-14) break;
  }
  return b;
}

Matrix random_design(Eigen::Index n, Eigen::Index p, RngStream& rng) {
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) x(i, j) = rng.normal();
  }
  return x;
}

}  // namespace

TEST_CASE("linear fit on an orthonormal design") {
  RngStream rng(1, 2);
  const Matrix q = Eigen::HouseholderQR<Matrix>(random_design(20, 4, rng)).householderQ() * Matrix::Identity(20, 4);
  const GlmFit fit = fit_glm(q, q.col(0), GlmKind::Linear);
  Vector expected = Vector::Zero(4);
  expected[0] = 1.0;
  CHECK((fit.coefficients - expected).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(fit.tau2_hat < 1e-25);
  CHECK(fit.n_obs == 20);
  CHECK(fit.n_params == 4);
}

TEST_CASE("weighted least squares matches the normal equations") {
  RngStream rng(4, 2);
  const Matrix x = random_design(60, 3, rng);
  Vector y(60), w(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    y[i] = 1.0 + 2.0 * x(i, 1) - x(i, 2) + rng.normal();
    w[i] = 1.0 + 4.0 * rng.uniform();
  }
  const GlmFit fit = fit_glm(x, y, GlmKind::Linear, w);
  const Vector ref = (x.transpose() * w.asDiagonal() * x).ldlt().solve(x.transpose() * w.asDiagonal() * y);
  CHECK((fit.coefficients - ref).lpNorm<Eigen::Infinity>() < 1e-12);
  const GlmFit plain = fit_glm(x, y, GlmKind::Linear);
  const Vector resid = y - x * plain.coefficients;
  CHECK(plain.tau2_hat == doctest::Approx(resid.squaredNorm() / 57.0).epsilon(1e-12));
}

TEST_CASE("logistic fits") {
  SUBCASE("balanced symmetric data has zero intercept") {
    Matrix x(8, 2);
    Vector y(8);
    const double xs[] = {-2.0, -1.0, 0.5, 1.5};
    const double ys[] = {0, 1, 0, 1};
    for (int k = 0; k < 4; ++k) {
      x.row(2 * k) << 1.0, xs[k];
      y[2 * k] = ys[k];
      x.row(2 * k + 1) << 1.0, -xs[k];
      y[2 * k + 1] = 1.0 - ys[k];
    }
    const GlmFit fit = fit_glm(x, y, GlmKind::Logistic);
    CHECK(std::abs(fit.coefficients[0]) < 1e-8);
  }
  SUBCASE("independent Newton oracle") {
    RngStream rng(300, 1);
    const Matrix x = random_design(300, 4, rng);
    Vector y(300);
    for (Eigen::Index i = 0; i < 300; ++i) {
      const double eta = -0.5 + 0.8 * x(i, 1) - 0.4 * x(i, 2) + 0.2 * x(i, 3);
      y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    }
    const GlmFit fit = fit_glm(x, y, GlmKind::Logistic);
    CHECK(fit.converged);
    CHECK_FALSE(fit.separation);
    CHECK((fit.coefficients - logistic_newton(x, y)).lpNorm<Eigen::Infinity>() < 1e-8);
    // Working residual dispersion, normalized by n - p.
    double t = 0.0;
    for (Eigen::Index i = 0; i < 300; ++i) {
      const double mu = 1.0 / (1.0 + std::exp(-x.row(i).dot(fit.coefficients)));
      t += std::pow((y[i] - mu) / (mu * (1 - mu)), 2);
    }
    CHECK(fit.tau2_hat == doctest::Approx(t / 296.0).epsilon(1e-8));
  }
  SUBCASE("complete separation is flagged") {
    Matrix x(40, 2);
    Vector y(40);
    for (int i = 0; i < 40; ++i) {
      x.row(i) << 1.0, i - 19.5;
      y[i] = i >= 20 ? 1.0 : 0.0;
    }
    const GlmFit fit = fit_glm(x, y, GlmKind::Logistic);
    CHECK(fit.separation);
  }
  SUBCASE("quasi-separation stops with finite coefficients") {
    // A group indicator whose rows are all events; the other rows overlap.
    Matrix x(60, 3);
    Vector y(60);
    for (int i = 0; i < 60; ++i) {
      x.row(i) << 1.0, i >= 40 ? 1.0 : 0.0, std::sin(i);
      y[i] = i >= 40 ? 1.0 : (i % 3 == 0 ? 1.0 : 0.0);
    }
    const GlmFit fit = fit_glm(x, y, GlmKind::Logistic);
    CHECK(fit.separation);
    CHECK(fit.coefficients.allFinite());
    CHECK(fit.coefficients[1] > 8.0);
    CHECK(fit.tau2_hat > 0.0);
  }
}

TEST_CASE("glm input errors") {
  RngStream rng(9, 9);
  Matrix x = random_design(30, 3, rng);
  Vector y = Vector::Zero(30);
  y.head(10).setOnes();
  x.col(2) = 2.0 * x.col(1);
  CHECK_THROWS_AS(fit_glm(x, y, GlmKind::Linear), RankError);
  CHECK_THROWS_AS(fit_glm(x, y, GlmKind::Logistic), RankError);
  const Matrix tiny = random_design(3, 3, rng);
  CHECK_THROWS_AS(fit_glm(tiny, Vector::Zero(3), GlmKind::Linear), ParameterError);
  Vector bad = y;
  bad[0] = 0.5;
  CHECK_THROWS_AS(fit_glm(random_design(30, 2, rng), bad, GlmKind::Logistic), ParameterError);
}

TEST_CASE("posterior draws") {
  RngStream rng(12, 0);
  const Matrix x = random_design(50, 3, rng);
  Vector y(50);
  for (Eigen::Index i = 0; i < 50; ++i) y[i] = 0.5 + x(i, 1) + 0.7 * rng.normal();
  const GlmFit fit = fit_glm(x, y, GlmKind::Linear);

  SUBCASE("zero dispersion returns the estimate") {
    GlmFit exact = fit;
    exact.tau2_hat = 0.0;
    const GlmDraw d = posterior_draw(exact, rng);
    CHECK((d.coefficients - fit.coefficients).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("moments of 1e5 draws") {
    const int n = 100000;
    Matrix draws(n, 3);
    for (int i = 0; i < n; ++i) draws.row(i) = posterior_draw(fit, rng).coefficients.transpose();
    const Vector mean = draws.colwise().mean();
    const Matrix centered = draws.rowwise() - mean.transpose();
    const Matrix cov = centered.transpose() * centered / (n - 1.0);
    const Matrix expected = fit.tau2_hat * 47.0 / 45.0 * fit.xtx_inverse;
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) {
        const double scale = std::sqrt(expected(j, j) * expected(k, k));
        CHECK(std::abs(cov(j, k) - expected(j, k)) < 0.05 * scale);
      }
    }
  }
  SUBCASE("fixed stream, fixed draws") {
    RngStream a(77, 1), b(77, 1);
    for (int i = 0; i < 5; ++i) CHECK(posterior_draw(fit, a).coefficients == posterior_draw(fit, b).coefficients);
  }
  SUBCASE("n <= p") {
    GlmFit bad = fit;
    bad.n_obs = 3;
    CHECK_THROWS_AS(posterior_draw(bad, rng), ParameterError);
  }
}
