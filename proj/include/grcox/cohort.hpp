#pragma once

#include "grcox/numeric.hpp"

#include <optional>
#include <string>
#include <vector>

namespace grcox {

/// Full phase-one cohort: error-prone view for everyone plus (optionally) the
/// validated truth block. Truth cells for unvalidated subjects hold NaN in
/// analysis mode; in simulation mode the complete truth is kept and masked by
/// TruthView.
struct Cohort {
  Matrix x_star;      // N x p, error-prone continuous covariates
  Matrix z;           // N x q, error-free covariates
  Vector u_star;      // N, observed follow-up time
  Vector delta_star;  // N, error-prone event indicator in {0,1}

  std::optional<Matrix> x_true;
  std::optional<Vector> u_true;
  std::optional<Vector> delta_true;

  Eigen::Index size() const noexcept { return u_star.size(); }
  Eigen::Index p() const noexcept { return x_star.cols(); }
  Eigen::Index q() const noexcept { return z.cols(); }
  bool has_truth() const noexcept { return x_true && u_true && delta_true; }

  /// Checks dimensions, time non-negativity and binary indicators.
  /// Truth cells may be NaN (missing) but, where present, must satisfy the same rules.
  void validate() const;

  /// Error-prone covariate block (X*, Z).
  Matrix error_prone_covariates() const;
};

enum class DesignKind { SRS, CC, SCCB, SCCN, External };

std::string to_string(DesignKind kind);
DesignKind design_kind_from_string(const std::string& s);

struct DesignDescriptor {
  DesignKind kind = DesignKind::External;
  std::vector<double> cutpoints;  // absolute stratification cutpoints actually used
  IndexVector stratum;            // per-subject stratum label, empty for unstratified designs
  std::vector<Eigen::Index> stratum_sizes;
  std::vector<Eigen::Index> stratum_sampled;
  std::vector<std::string> warnings;
};

/// Phase-two validation sample with known inclusion probabilities.
struct TwoPhaseSample {
  Eigen::VectorXi r;  // N, validation indicator
  Vector pi;          // N, inclusion probabilities in (0, 1]
  DesignDescriptor design;

  Eigen::Index size() const noexcept { return r.size(); }
  Eigen::Index n_validated() const noexcept { return r.sum(); }
  std::vector<Eigen::Index> validated_indices() const;

  /// Requires 0 < pi <= 1, r binary, r=1 wherever pi=1 is impossible to check, and at least
  /// min_validated validated subjects.
  void validate(Eigen::Index n_subjects, Eigen::Index min_validated) const;
};

/// Read-only accessor to truth columns that refuses unvalidated rows.
class TruthView {
 public:
  TruthView(const Cohort& cohort, const TwoPhaseSample& sample);

  double delta(Eigen::Index i) const;
  double u(Eigen::Index i) const;
  Eigen::RowVectorXd x(Eigen::Index i) const;

  /// Validated-only copies (rows in increasing subject order).
  Matrix validated_covariates() const;  // (X, Z) rows
  Vector validated_time() const;
  Vector validated_event() const;
  const std::vector<Eigen::Index>& validated() const noexcept { return idx_; }

 private:
  void require(Eigen::Index i) const;
  const Cohort& cohort_;
  const TwoPhaseSample& sample_;
  std::vector<Eigen::Index> idx_;
};

/// Imputed replacements for Delta, X and U for all N subjects.
struct ImputedOverlay {
  Vector delta_hat;
  std::optional<Matrix> x_hat;
  std::optional<Vector> u_hat;
  int m_index = 0;
};

enum class Role { Intercept, Delta, X, U, Z };

enum class ModelResponse { Delta, X, ROffset };

/// Describes an imputation design matrix: intercept first, then the predictor roles in the
/// fixed order (Delta, X, U, Z), then all pairwise products of the non-intercept columns in
/// sorted pair order.
struct ModelSpec {
  ModelResponse response = ModelResponse::Delta;
  std::vector<Role> predictors{Role::Delta, Role::X, Role::U, Role::Z};
  bool interactions = false;
  bool ipw = false;

  /// Which predictor roles read the imputed overlay instead of the error-prone column.
  bool overlay_delta = false;
  bool overlay_x = false;
  bool overlay_u = false;
};

Matrix build_design_matrix(const Cohort& cohort, const ModelSpec& spec,
                           const ImputedOverlay* overlay = nullptr);

/// Appends all pairwise products of columns [first, cols) in (j, k), j < k, order.
Matrix add_pairwise_interactions(const Matrix& main_effects, Eigen::Index first = 1);

/// Copies the given rows.
Matrix select_rows(const Matrix& m, const std::vector<Eigen::Index>& rows);
Vector select_rows(const Vector& v, const std::vector<Eigen::Index>& rows);

}  // namespace grcox
