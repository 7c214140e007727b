#pragma once

#include "grcox/estimators.hpp"
#include "grcox/numeric.hpp"

#include <string>
#include <vector>

namespace grcox {

/// 2x2 agreement of an error-prone event indicator with the truth. Ratios with a zero
/// denominator are NaN and flagged.
struct MisclassificationMetrics {
  double sens = 0.0;
  double spec = 0.0;
  double ppv = 0.0;
  double npv = 0.0;
  Eigen::Index tp = 0, fp = 0, tn = 0, fn = 0;
  bool sens_undefined = false, spec_undefined = false, ppv_undefined = false, npv_undefined = false;
};

MisclassificationMetrics misclassification_metrics(const Vector& delta_true, const Vector& delta_star);

/// Same ratios from confusion counts.
MisclassificationMetrics misclassification_from_counts(Eigen::Index tp, Eigen::Index fp, Eigen::Index tn,
                                                       Eigen::Index fn);

struct ReplicateRecord {
  int index = 0;
  std::vector<MethodOutcome> outcomes;
  MisclassificationMetrics misclass;
  double censoring_rate = 0.0;
  Eigen::Index n_validated = 0;
  std::vector<std::string> warnings;
};

struct MethodMetrics {
  std::string method;
  double pct_bias = 0.0;  // absolute bias when the true value is 0
  bool bias_is_absolute = false;
  double ese = 0.0;
  double re = 0.0;
  double ase = 0.0;
  double mse = 0.0;
  double cp = 0.0;
  double type1 = 0.0;  // NaN unless the true value is 0
  double fail_rate = 0.0;
  Eigen::Index successes = 0;
  Eigen::Index failures = 0;
};

struct MetricsReport {
  std::vector<MethodMetrics> methods;
  MisclassificationMetrics misclass;  // mean ratios over replicates, counts summed
  double censoring_rate = 0.0;
  std::vector<std::string> warnings;

  const MethodMetrics& at(const std::string& method) const;
};

/// Summaries of coefficient `coef` across replicates (sorted internally by replicate index).
/// RE needs HT among the methods; StateError otherwise.
MetricsReport aggregate_metrics(const std::vector<ReplicateRecord>& records, double beta_true, int coef = 0);

}  // namespace grcox
