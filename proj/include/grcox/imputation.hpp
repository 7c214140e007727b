#pragma once

#include "grcox/calibration.hpp"
#include "grcox/cohort.hpp"
#include "grcox/glm.hpp"
#include "grcox/numeric.hpp"

#include <optional>
#include <string>
#include <vector>

namespace grcox {

/// Which error-prone variables the chained equations impute.
enum class FcsVariables { Delta, DeltaU, DeltaUX };

/// Auxiliary average plus the per-imputation material the IF working models need.
struct ImputationResult {
  AuxiliaryMatrix aux;
  std::vector<ImputedOverlay> overlays;
  std::vector<Matrix> dfbetas;  // N x P per imputation, on the imputed data
  std::vector<std::string> warnings;
};

struct IfCalibrationResult {
  AuxiliaryMatrix aux;
  std::vector<std::string> dropped_columns;
};

ImputationResult grmi_auxiliary(const Cohort& cohort, const TwoPhaseSample& sample, int m_count,
                                bool interactions, RngStream& rng);

ImputationResult fcsmi_auxiliary(const Cohort& cohort, const TwoPhaseSample& sample, int m_count,
                                 int l_count, FcsVariables vars, bool interactions, RngStream& rng);

/// Regresses the validated true dfbeta (rows in validated order) on the imputed dfbeta and
/// imputed data per imputation and coefficient, averaging fitted values over imputations.
/// The working models are weighted by 1/pi.
IfCalibrationResult if_calibration_auxiliary(const Cohort& cohort, const TwoPhaseSample& sample,
                                             const ImputationResult& base,
                                             const Matrix& true_dfbeta_validated);

/// Cox fit on (X_hat, Z) with time U_hat and event Delta_hat for the full cohort.
std::pair<CoxFit, Matrix> fit_imputed_cox(const Cohort& cohort, const ImputedOverlay& overlay,
                                          const std::optional<Vector>& warm_start);

}  // namespace grcox
