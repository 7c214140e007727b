#include "grcox/designs.hpp"

#include "grcox/calibration.hpp"
#include "grcox/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace grcox {

namespace {

constexpr int kStrata = 8;

// Partial Fisher-Yates: the first k entries of `pool` become a uniform random k-subset.
void choose(std::vector<Eigen::Index>& pool, Eigen::Index k, RngStream& rng) {
  const auto n = pool.size();
  for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) {
    const auto pick = j + static_cast<std::size_t>(rng.below(n - j));
    std::swap(pool[j], pool[pick]);
  }
}

std::vector<Eigen::Index> largest_remainder(const std::vector<double>& weights, Eigen::Index total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<Eigen::Index> out(weights.size(), 0);
  if (total == 0 || !(wsum > 0.0)) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  Eigen::Index given = 0;
  for (std::size_t h = 0; h < weights.size(); ++h) {
    const double exact = static_cast<double>(total) * weights[h] / wsum;
    const auto base = static_cast<Eigen::Index>(std::floor(exact));
    out[h] = base;
    given += base;
    if (weights[h] > 0.0) rem.emplace_back(exact - static_cast<double>(base), h);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < total && k < rem.size(); ++k, ++given) ++out[rem[k].second];
  return out;
}

TwoPhaseSample sample_strata(const IndexVector& labels, const std::vector<Eigen::Index>& alloc,
                             DesignKind kind, RngStream& rng) {
  const Eigen::Index n = labels.size();
  std::vector<std::vector<Eigen::Index>> members(alloc.size());
  for (Eigen::Index i = 0; i < n; ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);

  TwoPhaseSample s;
  s.r = Eigen::VectorXi::Zero(n);
  s.pi = Vector::Zero(n);
  s.design.kind = kind;
  s.design.stratum = labels;
  for (std::size_t h = 0; h < alloc.size(); ++h) {
    auto& pool = members[h];
    const auto size = static_cast<Eigen::Index>(pool.size());
    s.design.stratum_sizes.push_back(size);
    s.design.stratum_sampled.push_back(alloc[h]);
    if (size == 0) continue;
    if (alloc[h] == 0) {
      throw DesignError("stratum " + std::to_string(h) + " is nonempty but receives no validation draws");
    }
    choose(pool, alloc[h], rng);
    const double pi = static_cast<double>(alloc[h]) / static_cast<double>(size);
    for (auto i : pool) s.pi[i] = pi;
    for (Eigen::Index k = 0; k < alloc[h]; ++k) s.r[pool[static_cast<std::size_t>(k)]] = 1;
  }
  return s;
}

std::vector<Eigen::Index> stratum_sizes(const IndexVector& labels) {
  std::vector<Eigen::Index> sizes(kStrata, 0);
  for (Eigen::Index i = 0; i < labels.size(); ++i) ++sizes[static_cast<std::size_t>(labels[i])];
  return sizes;
}

void note_exhausted(TwoPhaseSample& s, const std::vector<Eigen::Index>& desired) {
  for (std::size_t h = 0; h < desired.size(); ++h) {
    const auto size = s.design.stratum_sizes[h];
    if (size > 0 && desired[h] > size) {
      std::ostringstream os;
      os << "stratum " << h << " exhausted: allocation " << desired[h] << " exceeds size " << size
         << ", deficit redistributed";
      s.design.warnings.push_back(os.str());
    }
  }
}

void check_binary(const Vector& delta_star) {
  for (Eigen::Index i = 0; i < delta_star.size(); ++i) {
    if (delta_star[i] != 0.0 && delta_star[i] != 1.0) throw SchemaError("delta_star must be 0/1");
  }
}

}  // namespace

void DesignSpec::validate(Eigen::Index n_subjects) const {
  if (n_target < 0 || n_target > n_subjects) {
    throw ParameterError("design: n_target " + std::to_string(n_target) + " outside [0, " +
                         std::to_string(n_subjects) + "]");
  }
  if (kind != DesignKind::CC && n_target == 0) throw ParameterError("design: n_target must be positive");
  if (!(cc_ratio > 0.0)) throw ParameterError("design: cc_ratio must be positive");
  if (cutpoint_quantiles.size() != 3 && !cutpoints) {
    throw ParameterError("design: exactly three cutpoint quantiles are required");
  }
  for (std::size_t k = 0; k < cutpoint_quantiles.size(); ++k) {
    const double q = cutpoint_quantiles[k];
    if (!(q > 0.0 && q < 1.0) || (k > 0 && !(q > cutpoint_quantiles[k - 1]))) {
      throw ParameterError("design: cutpoint quantiles must be strictly increasing in (0, 1)");
    }
  }
  if (cutpoints) {
    if (cutpoints->size() != 3) throw ParameterError("design: exactly three cutpoints are required");
    for (std::size_t k = 1; k < cutpoints->size(); ++k) {
      if (!((*cutpoints)[k] > (*cutpoints)[k - 1])) throw ParameterError("design: cutpoints must increase");
    }
  }
}

TwoPhaseSample draw_srs(Eigen::Index n_subjects, Eigen::Index n, RngStream& rng) {
  if (n <= 0 || n > n_subjects) {
    throw ParameterError("draw_srs: need 0 < n <= N (n=" + std::to_string(n) + ", N=" +
                         std::to_string(n_subjects) + ")");
  }
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(n_subjects));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  choose(pool, n, rng);
  TwoPhaseSample s;
  s.r = Eigen::VectorXi::Zero(n_subjects);
  for (Eigen::Index k = 0; k < n; ++k) s.r[pool[static_cast<std::size_t>(k)]] = 1;
  s.pi = Vector::Constant(n_subjects, static_cast<double>(n) / static_cast<double>(n_subjects));
  s.design.kind = DesignKind::SRS;
  return s;
}

TwoPhaseSample draw_case_control(const Vector& delta_star, Eigen::Index n_target, RngStream& rng,
                                 double cc_ratio) {
  check_binary(delta_star);
  const Eigen::Index n = delta_star.size();
  std::vector<Eigen::Index> cases;
  std::vector<Eigen::Index> controls;
  for (Eigen::Index i = 0; i < n; ++i) (delta_star[i] == 1.0 ? cases : controls).push_back(i);
  const auto n_cases = static_cast<Eigen::Index>(cases.size());
  const auto n_controls = static_cast<Eigen::Index>(controls.size());
  if (n_cases == 0) throw DesignError("case-control design: no error-prone cases");
  if (n_target > 0 && n_cases > n_target) {
    throw DesignError("case-control design: " + std::to_string(n_cases) + " cases exceed n_target " +
                      std::to_string(n_target));
  }
  Eigen::Index wanted = n_target > 0 ? n_target - n_cases
                                     : static_cast<Eigen::Index>(std::llround(cc_ratio * static_cast<double>(n_cases)));
  TwoPhaseSample s;
  s.design.kind = DesignKind::CC;
  if (wanted > n_controls) {
    s.design.warnings.push_back("case-control design: only " + std::to_string(n_controls) +
                                " controls available, " + std::to_string(wanted) + " requested");
    wanted = n_controls;
  }
  if (n_controls > 0 && wanted == 0) {
    throw DesignError("case-control design: n_target leaves no room for controls");
  }
  choose(controls, wanted, rng);
  s.r = Eigen::VectorXi::Zero(n);
  s.pi = Vector::Ones(n);
  for (auto i : cases) s.r[i] = 1;
  const double pi_controls =
      n_controls > 0 ? static_cast<double>(wanted) / static_cast<double>(n_controls) : 1.0;
  for (auto i : controls) s.pi[i] = pi_controls;
  for (Eigen::Index k = 0; k < wanted; ++k) s.r[controls[static_cast<std::size_t>(k)]] = 1;
  s.design.stratum = IndexVector(n);
  for (Eigen::Index i = 0; i < n; ++i) s.design.stratum[i] = delta_star[i] == 1.0 ? 1 : 0;
  s.design.stratum_sizes = {n_controls, n_cases};
  s.design.stratum_sampled = {wanted, n_cases};
  return s;
}

std::vector<double> quantile_cutpoints(const Vector& values, const std::vector<double>& probs) {
  if (values.size() == 0) throw DimensionError("quantile_cutpoints: empty input");
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  for (double p : probs) {
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    out.push_back(sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]));
  }
  return out;
}

IndexVector stratum_labels(const Vector& delta_star, const Vector& strat_values,
                           const std::vector<double>& cutpoints) {
  if (delta_star.size() != strat_values.size()) throw DimensionError("stratum_labels: length mismatch");
  if (cutpoints.size() != 3) throw ParameterError("stratum_labels: three cutpoints required");
  check_binary(delta_star);
  IndexVector out(delta_star.size());
  for (Eigen::Index i = 0; i < delta_star.size(); ++i) {
    Eigen::Index band = 0;
    for (double c : cutpoints) band += strat_values[i] > c ? 1 : 0;
    out[i] = 4 * static_cast<Eigen::Index>(delta_star[i]) + band;
  }
  return out;
}

std::vector<Eigen::Index> allocate(const std::vector<double>& weights,
                                   const std::vector<Eigen::Index>& capacity, Eigen::Index total) {
  if (weights.size() != capacity.size()) throw DimensionError("allocate: length mismatch");
  const Eigen::Index room = std::accumulate(capacity.begin(), capacity.end(), Eigen::Index{0});
  if (total > room) {
    throw DesignError("allocation of " + std::to_string(total) + " exceeds total capacity " +
                      std::to_string(room));
  }
  std::vector<double> w(weights.size());
  for (std::size_t h = 0; h < w.size(); ++h) w[h] = capacity[h] > 0 ? std::max(weights[h], 0.0) : 0.0;
  std::vector<Eigen::Index> alloc = largest_remainder(w, total);
  for (int round = 0; round < 64; ++round) {
    for (std::size_t h = 0; h < alloc.size(); ++h) alloc[h] = std::min(alloc[h], capacity[h]);
    const Eigen::Index given = std::accumulate(alloc.begin(), alloc.end(), Eigen::Index{0});
    if (given == total) break;
    std::vector<double> remaining(alloc.size());
    for (std::size_t h = 0; h < alloc.size(); ++h) {
      remaining[h] = static_cast<double>(capacity[h] - alloc[h]);
    }
    const auto extra = largest_remainder(remaining, total - given);
    for (std::size_t h = 0; h < alloc.size(); ++h) alloc[h] += extra[h];
  }
  return alloc;
}

TwoPhaseSample draw_scc_balanced(const Vector& delta_star, const Vector& strat_values,
                                 const std::vector<double>& cutpoints, Eigen::Index n_target,
                                 RngStream& rng) {
  const Eigen::Index n = delta_star.size();
  if (n_target <= 0 || n_target > n) throw DesignError("SCCB design: n_target must lie in (0, N]");
  const IndexVector labels = stratum_labels(delta_star, strat_values, cutpoints);
  const auto sizes = stratum_sizes(labels);
  std::vector<double> w(kStrata);
  for (int h = 0; h < kStrata; ++h) w[static_cast<std::size_t>(h)] = sizes[static_cast<std::size_t>(h)] > 0 ? 1.0 : 0.0;
  const auto desired = largest_remainder(w, n_target);
  const auto alloc = allocate(w, sizes, n_target);
  TwoPhaseSample s = sample_strata(labels, alloc, DesignKind::SCCB, rng);
  s.design.cutpoints = cutpoints;
  note_exhausted(s, desired);
  return s;
}

TwoPhaseSample draw_scc_neyman(const Vector& delta_star, const Vector& strat_values,
                               const std::vector<double>& cutpoints, const Vector& influence,
                               Eigen::Index n_target, RngStream& rng) {
  const Eigen::Index n = delta_star.size();
  if (influence.size() != n) throw DimensionError("SCCN design: influence length mismatch");
  if (n_target <= 0 || n_target > n) throw DesignError("SCCN design: n_target must lie in (0, N]");
  const IndexVector labels = stratum_labels(delta_star, strat_values, cutpoints);
  const auto sizes = stratum_sizes(labels);

  std::vector<double> sum(kStrata, 0.0);
  std::vector<double> sumsq(kStrata, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto h = static_cast<std::size_t>(labels[i]);
    sum[h] += influence[i];
    sumsq[h] += influence[i] * influence[i];
  }
  std::vector<double> w(kStrata, 0.0);
  for (std::size_t h = 0; h < static_cast<std::size_t>(kStrata); ++h) {
    const auto nh = static_cast<double>(sizes[h]);
    if (sizes[h] < 2) continue;
    const double var = std::max((sumsq[h] - sum[h] * sum[h] / nh) / (nh - 1.0), 0.0);
    w[h] = nh * std::sqrt(var);
  }
  if (!(std::accumulate(w.begin(), w.end(), 0.0) > 0.0)) {
    throw DesignError("SCCN design: zero total allocation weight");
  }
  const auto desired = largest_remainder(w, n_target);
  auto alloc = allocate(w, sizes, n_target);

  // Every nonempty stratum keeps at least one draw so its inclusion probability is positive.
  std::vector<std::string> floor_notes;
  for (std::size_t h = 0; h < alloc.size(); ++h) {
    if (sizes[h] == 0 || alloc[h] > 0) continue;
    const auto donor = static_cast<std::size_t>(std::max_element(alloc.begin(), alloc.end()) - alloc.begin());
    if (alloc[donor] <= 1) throw DesignError("SCCN design: n_target too small for the nonempty strata");
    --alloc[donor];
    alloc[h] = 1;
    floor_notes.push_back("stratum " + std::to_string(h) + " raised to the minimum of one draw");
  }
  TwoPhaseSample s = sample_strata(labels, alloc, DesignKind::SCCN, rng);
  s.design.cutpoints = cutpoints;
  note_exhausted(s, desired);
  for (auto& note : floor_notes) s.design.warnings.push_back(std::move(note));
  return s;
}

TwoPhaseSample draw_design(const Cohort& cohort, const DesignSpec& spec, RngStream& rng) {
  spec.validate(cohort.size());
  if (spec.kind == DesignKind::SRS) return draw_srs(cohort.size(), spec.n_target, rng);
  if (spec.kind == DesignKind::CC) return draw_case_control(cohort.delta_star, spec.n_target, rng, spec.cc_ratio);
  if (spec.strat_column < 0 || spec.strat_column >= cohort.p()) {
    throw ParameterError("design: stratification column out of range");
  }
  const Vector strat = cohort.x_star.col(spec.strat_column);
  const std::vector<double> cuts =
      spec.cutpoints ? *spec.cutpoints : quantile_cutpoints(strat, spec.cutpoint_quantiles);
  if (spec.kind == DesignKind::SCCB) return draw_scc_balanced(cohort.delta_star, strat, cuts, spec.n_target, rng);
  if (spec.kind == DesignKind::SCCN) {
    const auto [fit, inf] = naive_fit(cohort);
    if (spec.influence_column < 0 || spec.influence_column >= inf.dfbeta.cols()) {
      throw ParameterError("design: influence column out of range");
    }
    return draw_scc_neyman(cohort.delta_star, strat, cuts, inf.dfbeta.col(spec.influence_column),
                           spec.n_target, rng);
  }
  throw DesignError("design: cannot draw an external design");
}

}  // namespace grcox
