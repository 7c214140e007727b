#pragma once

#include "grcox/calibration.hpp"
#include "grcox/cohort.hpp"
#include "grcox/imputation.hpp"
#include "grcox/numeric.hpp"

#include <string>
#include <vector>

namespace grcox {

struct EstimationOptions {
  int m_count = 10;
  int l_count = 50;
  bool intercept_calibration = true;
  FcsVariables fcs_vars = FcsVariables::DeltaUX;
  CalibrationOptions calibration;
};

/// One method's result on one (cohort, sample) pair.
struct MethodOutcome {
  std::string method;
  bool ok = false;
  Vector beta;
  Vector se;
  Matrix covariance;
  std::string error;
  std::vector<std::string> warnings;
  double max_calib_residual = 0.0;  // relative, raking methods only
};

/// True, HT, GRN, GRMIS, GRMIC, GRFCSMIS, GRFCSMIC, IF-GRMIS, IF-GRMIC, IF-GRFCSMIS, IF-GRFCSMIC.
const std::vector<std::string>& known_methods();
bool is_known_method(const std::string& name);

/// Fits each requested method. Failures are caught per method and reported in the outcome.
/// Each imputation family draws from its own substream of `rng`, so the result for one
/// method does not depend on which other methods were requested.
std::vector<MethodOutcome> estimate_methods(const Cohort& cohort, const TwoPhaseSample& sample,
                                            const std::vector<std::string>& methods,
                                            const EstimationOptions& options, const RngStream& rng);

/// Stable 64-bit tag for a string (FNV-1a), used to key substreams by name.
std::uint64_t name_tag(const std::string& name);

}  // namespace grcox
