#include <doctest.h>

#include "grcox/calibration.hpp"
#include "grcox/designs.hpp"
#include "grcox/errors.hpp"
#include "helpers.hpp"

#include <cmath>
#include <numeric>

using namespace grcox;

namespace {

const std::vector<double> kCuts{1.0, 2.0, 3.0};

// Strata filled to the given sizes: delta_star = h / 4, value in band h % 4.
std::pair<Vector, Vector> strata_data(const std::vector<Eigen::Index>& sizes) {
  const Eigen::Index n = std::accumulate(sizes.begin(), sizes.end(), Eigen::Index{0});
  Vector d(n), v(n);
  Eigen::Index i = 0;
  for (std::size_t h = 0; h < sizes.size(); ++h) {
    for (Eigen::Index k = 0; k < sizes[h]; ++k, ++i) {
      d[i] = h >= 4 ? 1.0 : 0.0;
      v[i] = 0.5 + static_cast<double>(h % 4) + 0.4 * static_cast<double>(k) / static_cast<double>(sizes[h]);
    }
  }
  return {d, v};
}

void check_ht_counts(const TwoPhaseSample& s) {
  const auto& lab = s.design.stratum;
  for (std::size_t h = 0; h < s.design.stratum_sizes.size(); ++h) {
    double total = 0.0;
    Eigen::Index sampled = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (lab[i] != static_cast<Eigen::Index>(h)) continue;
      if (s.r[i]) {
        total += 1.0 / s.pi[i];
        ++sampled;
      }
    }
    CHECK(sampled == s.design.stratum_sampled[h]);
    CHECK(total == doctest::Approx(static_cast<double>(s.design.stratum_sizes[h])).epsilon(1e-12));
  }
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    CHECK(s.pi[i] > 0.0);
    if (s.pi[i] == 1.0) CHECK(s.r[i] == 1);
  }
}

}  // namespace

TEST_CASE("simple random sampling") {
  RngStream rng(1, 1);
  const TwoPhaseSample all = draw_srs(50, 50, rng);
  CHECK(all.r.sum() == 50);
  CHECK((all.pi.array() == 1.0).all());

  const TwoPhaseSample s = draw_srs(2000, 400, rng);
  CHECK(s.r.sum() == 400);
  CHECK((s.pi.array() == 0.2).all());
  CHECK_THROWS_AS(draw_srs(10, 11, rng), ParameterError);

  std::vector<int> hits(50, 0);
  const int reps = 100000;
  for (int k = 0; k < reps; ++k) {
    const TwoPhaseSample t = draw_srs(50, 10, rng);
    for (int i = 0; i < 50; ++i) hits[static_cast<std::size_t>(i)] += t.r[i];
  }
  for (int h : hits) CHECK(std::abs(static_cast<double>(h) / reps - 0.2) < 0.01);
}

TEST_CASE("case-control sampling") {
  RngStream rng(2, 2);
  Vector d = Vector::Zero(1595);
  d.head(248).setOnes();
  const TwoPhaseSample s = draw_case_control(d, 340, rng);
  CHECK(s.r.sum() == 340);
  Eigen::Index controls = 0;
  for (Eigen::Index i = 248; i < 1595; ++i) controls += s.r[i];
  CHECK(controls == 92);
  for (Eigen::Index i = 0; i < 248; ++i) CHECK(s.pi[i] == 1.0);
  CHECK(s.pi[300] == doctest::Approx(92.0 / 1347.0).epsilon(1e-15));
  check_ht_counts(s);

  CHECK_THROWS_AS(draw_case_control(Vector::Zero(30), 10, rng), DesignError);
  CHECK_THROWS_AS(draw_case_control(d, 200, rng), DesignError);
  const TwoPhaseSample cases_only = draw_case_control(Vector::Ones(30), 30, rng);
  CHECK((cases_only.pi.array() == 1.0).all());
  CHECK(cases_only.r.sum() == 30);

  const TwoPhaseSample one_to_one = draw_case_control(d, 0, rng);
  CHECK(one_to_one.r.sum() == 496);
}

TEST_CASE("cutpoints and strata") {
  Vector v(5);
  v << 4.0, 1.0, 3.0, 2.0, 5.0;
  const auto q = quantile_cutpoints(v, {0.2, 0.5, 0.8});
  // Type-7: 1 + (n - 1) p on the sorted values 1..5.
  CHECK(q[0] == doctest::Approx(1.8));
  CHECK(q[1] == doctest::Approx(3.0));
  CHECK(q[2] == doctest::Approx(4.2));

  Vector d(4), s(4);
  d << 0, 1, 0, 1;
  s << 0.5, 1.5, 2.0, 3.5;
  const IndexVector lab = stratum_labels(d, s, kCuts);
  CHECK(lab[0] == 0);
  CHECK(lab[1] == 5);
  CHECK(lab[2] == 1);  // a value on a cutpoint stays in the lower band
  CHECK(lab[3] == 7);
}

TEST_CASE("largest-remainder allocation") {
  CHECK(allocate({1, 1, 1}, {10, 10, 10}, 10) == std::vector<Eigen::Index>{4, 3, 3});
  CHECK(allocate({1, 1, 1, 1}, {3, 100, 100, 100}, 100) == std::vector<Eigen::Index>{3, 33, 32, 32});
  CHECK(allocate({2, 1}, {100, 100}, 30) == std::vector<Eigen::Index>{20, 10});
  CHECK_THROWS_AS(allocate({1, 1}, {2, 2}, 5), DesignError);
}

TEST_CASE("stratified balanced sampling") {
  RngStream rng(3, 3);
  SUBCASE("equal strata") {
    const auto [d, v] = strata_data(std::vector<Eigen::Index>(8, 100));
    const TwoPhaseSample s = draw_scc_balanced(d, v, kCuts, 680, rng);
    for (auto k : s.design.stratum_sampled) CHECK(k == 85);
    CHECK(s.r.sum() == 680);
    CHECK(s.design.warnings.empty());
    check_ht_counts(s);
  }
  SUBCASE("exhausted stratum") {
    const auto [d, v] = strata_data({3, 200, 200, 200, 200, 200, 200, 200});
    const TwoPhaseSample s = draw_scc_balanced(d, v, kCuts, 800, rng);
    CHECK(s.design.stratum_sampled[0] == 3);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(s.pi[i] == 1.0);
    CHECK(s.r.sum() == 800);
    Eigen::Index rest = 0;
    for (std::size_t h = 1; h < 8; ++h) rest += s.design.stratum_sampled[h];
    CHECK(rest == 797);
    CHECK(s.design.warnings.size() == 1);
    check_ht_counts(s);
  }
  CHECK_THROWS(draw_scc_balanced(Vector::Zero(10), Vector::Zero(10), kCuts, 11, rng));
}

TEST_CASE("stratified Neyman sampling") {
  RngStream rng(4, 4);
  SUBCASE("identical SD and size is balanced") {
    const auto [d, v] = strata_data(std::vector<Eigen::Index>(8, 100));
    Vector inf(800);
    for (Eigen::Index i = 0; i < 800; ++i) inf[i] = i % 2 ? 1.0 : -1.0;
    const TwoPhaseSample s = draw_scc_neyman(d, v, kCuts, inf, 680, rng);
    for (auto k : s.design.stratum_sampled) CHECK(k == 85);
  }
  SUBCASE("zero-SD stratum keeps the floor of one") {
    const auto [d, v] = strata_data(std::vector<Eigen::Index>(8, 100));
    Vector inf(800);
    for (Eigen::Index i = 0; i < 800; ++i) inf[i] = i < 100 ? 0.3 : (i % 2 ? 1.0 : -1.0);
    const TwoPhaseSample s = draw_scc_neyman(d, v, kCuts, inf, 400, rng);
    CHECK(s.design.stratum_sampled[0] == 1);
    CHECK(s.r.sum() == 400);
    CHECK_FALSE(s.design.warnings.empty());
    check_ht_counts(s);
  }
  SUBCASE("zero allocation weight") {
    const auto [d, v] = strata_data(std::vector<Eigen::Index>(8, 10));
    CHECK_THROWS_AS(draw_scc_neyman(d, v, kCuts, Vector::Ones(80), 40, rng), DesignError);
  }
  SUBCASE("HT total of the influence column is unbiased") {
    const Cohort c = testing::simulated_cohort(2000, 1, 11);
    const Vector strat = c.x_star.col(0);
    const auto cuts = quantile_cutpoints(strat, {0.2, 0.5, 0.8});
    const auto [fit, inf] = naive_fit(c);
    // Shift so the total is far from zero and a 1% band is meaningful.
    const Vector col = inf.dfbeta.col(0).array() + 0.05;
    const double total = col.sum();
    double mean = 0.0;
    const int reps = 10000;
    for (int k = 0; k < reps; ++k) {
      const TwoPhaseSample s = draw_scc_neyman(c.delta_star, strat, cuts, col, 400, rng);
      double ht = 0.0;
      for (Eigen::Index i = 0; i < 2000; ++i) {
        if (s.r[i]) ht += col[i] / s.pi[i];
      }
      mean += ht / reps;
    }
    CHECK(std::abs(mean - total) < 0.01 * std::abs(total));
  }
}

TEST_CASE("draw_design dispatch") {
  const Cohort c = testing::simulated_cohort(1000, 3, 12);
  RngStream rng(5, 5);
  DesignSpec spec;
  spec.n_target = 200;
  for (auto kind : {DesignKind::SRS, DesignKind::SCCB, DesignKind::SCCN}) {
    spec.kind = kind;
    const TwoPhaseSample s = draw_design(c, spec, rng);
    CHECK(s.r.sum() == 200);
    CHECK(s.design.kind == kind);
    CHECK_NOTHROW(s.validate(1000, 4));
  }
  spec.kind = DesignKind::CC;
  spec.n_target = 0;
  const TwoPhaseSample cc = draw_design(c, spec, rng);
  CHECK(cc.r.sum() == 2 * static_cast<Eigen::Index>(c.delta_star.sum()));
  spec.kind = DesignKind::External;
  spec.n_target = 10;
  CHECK_THROWS_AS(draw_design(c, spec, rng), DesignError);
}
