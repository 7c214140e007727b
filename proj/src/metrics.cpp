#include "grcox/metrics.hpp"

#include "grcox/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace grcox {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kZ975 = 1.959963984540054;

double ratio(Eigen::Index num, Eigen::Index den, bool& undefined) {
  undefined = den == 0;
  return undefined ? kNaN : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MisclassificationMetrics misclassification_from_counts(Eigen::Index tp, Eigen::Index fp, Eigen::Index tn,
                                                       Eigen::Index fn) {
  if (tp < 0 || fp < 0 || tn < 0 || fn < 0) throw ParameterError("misclassification counts must be >= 0");
  MisclassificationMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  m.sens = ratio(tp, tp + fn, m.sens_undefined);
  m.spec = ratio(tn, tn + fp, m.spec_undefined);
  m.ppv = ratio(tp, tp + fp, m.ppv_undefined);
  m.npv = ratio(tn, tn + fn, m.npv_undefined);
  return m;
}

MisclassificationMetrics misclassification_metrics(const Vector& delta_true, const Vector& delta_star) {
  if (delta_true.size() != delta_star.size()) throw DimensionError("misclassification: length mismatch");
  Eigen::Index tp = 0, fp = 0, tn = 0, fn = 0;
  for (Eigen::Index i = 0; i < delta_true.size(); ++i) {
    const double d = delta_true[i];
    const double s = delta_star[i];
    if ((d != 0.0 && d != 1.0) || (s != 0.0 && s != 1.0)) throw ParameterError("misclassification: values must be 0/1");
    if (d == 1.0) {
      (s == 1.0 ? tp : fn)++;
    } else {
      (s == 1.0 ? fp : tn)++;
    }
  }
  return misclassification_from_counts(tp, fp, tn, fn);
}

const MethodMetrics& MetricsReport::at(const std::string& method) const {
  for (const auto& m : methods) {
    if (m.method == method) return m;
  }
  throw StateError("metrics report has no method '" + method + "'");
}

MetricsReport aggregate_metrics(const std::vector<ReplicateRecord>& records, double beta_true, int coef) {
  std::vector<const ReplicateRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->index < b->index; });

  std::vector<std::string> order;
  std::map<std::string, std::vector<const MethodOutcome*>> by_method;
  std::map<std::string, Eigen::Index> failures;
  for (const auto* r : sorted) {
    for (const auto& o : r->outcomes) {
      if (!by_method.count(o.method) && !failures.count(o.method)) order.push_back(o.method);
      if (o.ok && coef < o.beta.size()) {
        by_method[o.method].push_back(&o);
      } else {
        ++failures[o.method];
      }
    }
  }

  MetricsReport rep;
  const bool null_effect = beta_true == 0.0;
  for (const auto& name : order) {
    const auto& outs = by_method[name];
    MethodMetrics m;
    m.method = name;
    m.successes = static_cast<Eigen::Index>(outs.size());
    m.failures = failures[name];
    m.fail_rate = static_cast<double>(m.failures) / static_cast<double>(m.successes + m.failures);
    m.bias_is_absolute = null_effect;
    m.type1 = kNaN;
    const auto k = static_cast<double>(outs.size());
    if (outs.empty()) {
      m.pct_bias = m.ese = m.ase = m.mse = m.cp = kNaN;
      rep.warnings.push_back(name + ": no successful replicates");
      rep.methods.push_back(m);
      continue;
    }
    double sum = 0.0, sum_se = 0.0, sq_err = 0.0;
    Eigen::Index covered = 0, rejected = 0;
    for (const auto* o : outs) {
      const double b = o->beta[coef];
      const double se = o->se[coef];
      sum += b;
      sum_se += se;
      sq_err += (b - beta_true) * (b - beta_true);
      if (std::abs(b - beta_true) <= kZ975 * se) ++covered;
      if (std::abs(b) > kZ975 * se) ++rejected;
    }
    const double mean = sum / k;
    double ss = 0.0;
    for (const auto* o : outs) ss += (o->beta[coef] - mean) * (o->beta[coef] - mean);
    m.pct_bias = null_effect ? mean - beta_true : 100.0 * (mean - beta_true) / beta_true;
    m.ese = outs.size() >= 2 ? std::sqrt(ss / (k - 1.0)) : kNaN;
    m.ase = sum_se / k;
    m.mse = sq_err / k;
    m.cp = static_cast<double>(covered) / k;
    if (null_effect) m.type1 = static_cast<double>(rejected) / k;
    if (outs.size() < 2) rep.warnings.push_back(name + ": fewer than two successful replicates, ESE undefined");
    rep.methods.push_back(m);
  }

  const auto ht = std::find_if(rep.methods.begin(), rep.methods.end(), [](const auto& m) { return m.method == "HT"; });
  if (ht == rep.methods.end()) throw StateError("aggregate_metrics: relative efficiency needs the HT method");
  const double ese_ht = ht->ese;
  for (auto& m : rep.methods) m.re = ese_ht / m.ese;

  if (!sorted.empty()) {
    double sens = 0.0, spec = 0.0, ppv = 0.0, npv = 0.0, cens = 0.0;
    for (const auto* r : sorted) {
      sens += r->misclass.sens;
      spec += r->misclass.spec;
      ppv += r->misclass.ppv;
      npv += r->misclass.npv;
      cens += r->censoring_rate;
      rep.misclass.tp += r->misclass.tp;
      rep.misclass.fp += r->misclass.fp;
      rep.misclass.tn += r->misclass.tn;
      rep.misclass.fn += r->misclass.fn;
    }
    const auto k = static_cast<double>(sorted.size());
    rep.misclass.sens = sens / k;
    rep.misclass.spec = spec / k;
    rep.misclass.ppv = ppv / k;
    rep.misclass.npv = npv / k;
    rep.censoring_rate = cens / k;
  }
  return rep;
}

}  // namespace grcox
