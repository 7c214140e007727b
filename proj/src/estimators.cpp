#include "grcox/estimators.hpp"

#include "grcox/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

namespace grcox {

namespace {

struct ImputationKey {
  bool fcs = false;
  bool interactions = false;
  std::string name() const { return std::string(fcs ? "FCS" : "MI") + (interactions ? "-C" : "-S"); }
};

std::optional<ImputationKey> imputation_of(const std::string& method) {
  std::string m = method;
  if (m.rfind("IF-", 0) == 0) m = m.substr(3);
  if (m == "GRMIS") return ImputationKey{false, false};
  if (m == "GRMIC") return ImputationKey{false, true};
  if (m == "GRFCSMIS") return ImputationKey{true, false};
  if (m == "GRFCSMIC") return ImputationKey{true, true};
  return std::nullopt;
}

Vector standard_errors(const Matrix& cov) { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

class Session {
 public:
  Session(const Cohort& cohort, const TwoPhaseSample& sample, const EstimationOptions& options,
          const RngStream& rng)
      : cohort_(cohort), sample_(sample), options_(options), rng_(rng) {}

  MethodOutcome run(const std::string& method) {
    MethodOutcome out;
    out.method = method;
    try {
      if (!is_known_method(method)) throw SchemaError("unknown method '" + method + "'");
      if (method == "True") {
        fill_true(out);
      } else if (method == "HT") {
        fill(out, ht());
      } else if (method == "GRN") {
        fill(out, rake(build_auxiliary_naive(cohort_)));
      } else {
        const ImputationKey key = *imputation_of(method);
        const ImputationResult& base = imputation(key);
        out.warnings = base.warnings;
        if (method.rfind("IF-", 0) == 0) {
          const IfCalibrationResult ifc =
              if_calibration_auxiliary(cohort_, sample_, base, ht().dfbeta_validated);
          for (const auto& d : ifc.dropped_columns) out.warnings.push_back("dropped working-model column " + d);
          fill(out, rake(ifc.aux));
        } else {
          fill(out, rake(base.aux));
        }
      }
      out.ok = out.beta.allFinite() && out.se.allFinite();
      if (!out.ok && out.error.empty()) out.error = "non-finite estimate";
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
    return out;
  }

 private:
  const RakingFit& ht() {
    if (!ht_) ht_ = ht_estimate(cohort_, sample_);
    return *ht_;
  }

  RakingFit rake(const AuxiliaryMatrix& aux) {
    std::optional<Vector> warm;
    try {
      warm = ht().beta;
    } catch (const Error&) {
      warm.reset();
    }
    const AuxiliaryMatrix a = options_.intercept_calibration ? aux.with_intercept() : aux;
    RakingFit fit = raking_estimate(cohort_, sample_, a, warm, options_.calibration);
    last_rel_resid_ = fit.calib_residual.lpNorm<Eigen::Infinity>() / (1.0 + a.totals.lpNorm<Eigen::Infinity>());
    return fit;
  }

  const ImputationResult& imputation(const ImputationKey& key) {
    const std::string name = key.name();
    auto it = imputations_.find(name);
    if (it != imputations_.end()) return it->second;
    RngStream r = rng_.substream(name_tag(name));
    ImputationResult res =
        key.fcs ? fcsmi_auxiliary(cohort_, sample_, options_.m_count, options_.l_count, options_.fcs_vars,
                                  key.interactions, r)
                : grmi_auxiliary(cohort_, sample_, options_.m_count, key.interactions, r);
    return imputations_.emplace(name, std::move(res)).first->second;
  }

  void fill(MethodOutcome& out, const RakingFit& fit) {
    out.beta = fit.beta;
    out.covariance = fit.covariance;
    out.se = standard_errors(fit.covariance);
    out.max_calib_residual = fit.lambda.size() > 0 ? last_rel_resid_ : 0.0;
  }

  void fill_true(MethodOutcome& out) {
    if (!cohort_.has_truth()) throw StateError("True: cohort carries no truth block");
    if (!cohort_.x_true->allFinite() || !cohort_.u_true->allFinite() || !cohort_.delta_true->allFinite()) {
      throw StateError("True: truth columns are missing for some subjects");
    }
    Matrix cov(cohort_.size(), cohort_.p() + cohort_.q());
    cov << *cohort_.x_true, cohort_.z;
    const Vector w = Vector::Ones(cohort_.size());
    const CoxData data{cov, *cohort_.u_true, *cohort_.delta_true, w};
    const CoxFit fit = fit_cox(data);
    if (!fit.converged) throw StateError("True: Cox fit did not converge");
    out.beta = fit.beta;
    out.covariance = invert_spd(fit.information);
    out.se = standard_errors(out.covariance);
  }

  const Cohort& cohort_;
  const TwoPhaseSample& sample_;
  const EstimationOptions& options_;
  RngStream rng_;
  std::optional<RakingFit> ht_;
  std::map<std::string, ImputationResult> imputations_;
  double last_rel_resid_ = 0.0;
};

}  // namespace

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names{"True",     "HT",          "GRN",         "GRMIS",
                                              "GRMIC",    "GRFCSMIS",    "GRFCSMIC",    "IF-GRMIS",
                                              "IF-GRMIC", "IF-GRFCSMIS", "IF-GRFCSMIC"};
  return names;
}

bool is_known_method(const std::string& name) {
  const auto& k = known_methods();
  return std::find(k.begin(), k.end(), name) != k.end();
}

std::uint64_t name_tag(const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<MethodOutcome> estimate_methods(const Cohort& cohort, const TwoPhaseSample& sample,
                                            const std::vector<std::string>& methods,
                                            const EstimationOptions& options, const RngStream& rng) {
  Session session(cohort, sample, options, rng);
  std::vector<MethodOutcome> out;
  out.reserve(methods.size());
  for (const auto& m : methods) out.push_back(session.run(m));
  return out;
}

}  // namespace grcox
