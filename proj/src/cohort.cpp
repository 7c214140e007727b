#include "grcox/cohort.hpp"

#include "grcox/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace grcox {

namespace {

bool is_binary(double v) { return v == 0.0 || v == 1.0; }

}  // namespace

void Cohort::validate() const {
  const Eigen::Index n = size();
  if (x_star.rows() != n || z.rows() != n || delta_star.size() != n) {
    throw DimensionError("Cohort: column lengths disagree");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(u_star[i]) || u_star[i] < 0.0) {
      throw SchemaError("Cohort: u_star must be finite and >= 0 (row " + std::to_string(i) + ")");
    }
    if (!is_binary(delta_star[i])) {
      throw SchemaError("Cohort: delta_star must be 0/1 (row " + std::to_string(i) + ")");
    }
  }
  if (!x_star.allFinite() || !z.allFinite()) throw SchemaError("Cohort: non-finite covariates");
  if (x_true && (x_true->rows() != n || x_true->cols() != p())) {
    throw DimensionError("Cohort: x_true has wrong shape");
  }
  if (u_true) {
    if (u_true->size() != n) throw DimensionError("Cohort: u_true has wrong length");
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = (*u_true)[i];
      if (!std::isnan(u) && (u < 0.0 || !std::isfinite(u))) {
        throw SchemaError("Cohort: u_true must be >= 0 (row " + std::to_string(i) + ")");
      }
    }
  }
  if (delta_true) {
    if (delta_true->size() != n) throw DimensionError("Cohort: delta_true has wrong length");
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (*delta_true)[i];
      if (!std::isnan(d) && !is_binary(d)) {
        throw SchemaError("Cohort: delta_true must be 0/1 (row " + std::to_string(i) + ")");
      }
    }
  }
}

Matrix Cohort::error_prone_covariates() const {
  Matrix out(size(), p() + q());
  out << x_star, z;
  return out;
}

std::string to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::SRS: return "SRS";
    case DesignKind::CC: return "CC";
    case DesignKind::SCCB: return "SCCB";
    case DesignKind::SCCN: return "SCCN";
    case DesignKind::External: return "external";
  }
  return "external";
}

DesignKind design_kind_from_string(const std::string& s) {
  if (s == "SRS") return DesignKind::SRS;
  if (s == "CC") return DesignKind::CC;
  if (s == "SCCB" || s == "SCC") return DesignKind::SCCB;
  if (s == "SCCN") return DesignKind::SCCN;
  if (s == "external") return DesignKind::External;
  throw SchemaError("unknown design kind '" + s + "'");
}

std::vector<Eigen::Index> TwoPhaseSample::validated_indices() const {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(n_validated()));
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (r[i] == 1) idx.push_back(i);
  }
  return idx;
}

void TwoPhaseSample::validate(Eigen::Index n_subjects, Eigen::Index min_validated) const {
  if (r.size() != n_subjects || pi.size() != n_subjects) {
    throw DimensionError("TwoPhaseSample: length does not match cohort size");
  }
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (r[i] != 0 && r[i] != 1) {
      throw SchemaError("TwoPhaseSample: r must be 0/1 (row " + std::to_string(i) + ")");
    }
    if (!(pi[i] > 0.0 && pi[i] <= 1.0)) {
      std::ostringstream os;
      os << "TwoPhaseSample: pi must lie in (0, 1] (row " << i << ", value " << pi[i] << ")";
      throw SchemaError(os.str());
    }
  }
  if (n_validated() < min_validated) {
    throw DesignError("TwoPhaseSample: " + std::to_string(n_validated()) +
                      " validated subjects, need at least " + std::to_string(min_validated));
  }
}

TruthView::TruthView(const Cohort& cohort, const TwoPhaseSample& sample)
    : cohort_(cohort), sample_(sample), idx_(sample.validated_indices()) {
  if (!cohort.has_truth()) throw StateError("TruthView: cohort carries no truth block");
  if (sample.size() != cohort.size()) throw DimensionError("TruthView: sample/cohort size mismatch");
  for (auto i : idx_) {
    if (std::isnan((*cohort.delta_true)[i]) || std::isnan((*cohort.u_true)[i]) ||
        !cohort.x_true->row(i).allFinite()) {
      throw SchemaError("validated row " + std::to_string(i) + " lacks truth columns");
    }
  }
}

void TruthView::require(Eigen::Index i) const {
  if (i < 0 || i >= sample_.size() || sample_.r[i] != 1) {
    throw MaskError("truth requested for unvalidated subject " + std::to_string(i));
  }
}

double TruthView::delta(Eigen::Index i) const {
  require(i);
  return (*cohort_.delta_true)[i];
}

double TruthView::u(Eigen::Index i) const {
  require(i);
  return (*cohort_.u_true)[i];
}

Eigen::RowVectorXd TruthView::x(Eigen::Index i) const {
  require(i);
  return cohort_.x_true->row(i);
}

Matrix TruthView::validated_covariates() const {
  Matrix out(static_cast<Eigen::Index>(idx_.size()), cohort_.p() + cohort_.q());
  for (std::size_t k = 0; k < idx_.size(); ++k) {
    const auto i = idx_[k];
    out.row(static_cast<Eigen::Index>(k)) << cohort_.x_true->row(i), cohort_.z.row(i);
  }
  return out;
}

Vector TruthView::validated_time() const { return select_rows(*cohort_.u_true, idx_); }

Vector TruthView::validated_event() const { return select_rows(*cohort_.delta_true, idx_); }

Matrix add_pairwise_interactions(const Matrix& main_effects, Eigen::Index first) {
  const Eigen::Index k = main_effects.cols() - first;
  if (k < 2) return main_effects;
  const Eigen::Index pairs = k * (k - 1) / 2;
  Matrix out(main_effects.rows(), main_effects.cols() + pairs);
  out.leftCols(main_effects.cols()) = main_effects;
  Eigen::Index c = main_effects.cols();
  for (Eigen::Index a = first; a < main_effects.cols(); ++a) {
    for (Eigen::Index b = a + 1; b < main_effects.cols(); ++b) {
      out.col(c++) = main_effects.col(a).cwiseProduct(main_effects.col(b));
    }
  }
  return out;
}

Matrix build_design_matrix(const Cohort& cohort, const ModelSpec& spec,
                           const ImputedOverlay* overlay) {
  const Eigen::Index n = cohort.size();
  auto need_overlay = [&](const char* what) {
    if (overlay == nullptr) {
      throw SchemaError(std::string("build_design_matrix: spec reads imputed ") + what +
                        " but no overlay was supplied");
    }
  };

  std::vector<Role> roles = spec.predictors;
  auto rank = [](Role r) { return static_cast<int>(r); };
  std::stable_sort(roles.begin(), roles.end(), [&](Role a, Role b) { return rank(a) < rank(b); });

  Eigen::Index cols = 1;
  for (Role r : roles) {
    switch (r) {
      case Role::Intercept: break;
      case Role::Delta:
      case Role::U: cols += 1; break;
      case Role::X: cols += cohort.p(); break;
      case Role::Z: cols += cohort.q(); break;
    }
  }

  Matrix v(n, cols);
  v.col(0).setOnes();
  Eigen::Index c = 1;
  for (Role r : roles) {
    switch (r) {
      case Role::Intercept: break;
      case Role::Delta:
        if (spec.overlay_delta) {
          need_overlay("delta");
          v.col(c++) = overlay->delta_hat;
        } else {
          v.col(c++) = cohort.delta_star;
        }
        break;
      case Role::X:
        if (spec.overlay_x) {
          need_overlay("x");
          if (!overlay->x_hat) throw SchemaError("build_design_matrix: overlay lacks x_hat");
          v.middleCols(c, cohort.p()) = *overlay->x_hat;
        } else {
          v.middleCols(c, cohort.p()) = cohort.x_star;
        }
        c += cohort.p();
        break;
      case Role::U:
        if (spec.overlay_u) {
          need_overlay("u");
          if (!overlay->u_hat) throw SchemaError("build_design_matrix: overlay lacks u_hat");
          v.col(c++) = *overlay->u_hat;
        } else {
          v.col(c++) = cohort.u_star;
        }
        break;
      case Role::Z:
        v.middleCols(c, cohort.q()) = cohort.z;
        c += cohort.q();
        break;
    }
  }
  if (spec.interactions) return add_pairwise_interactions(v, 1);
  return v;
}

Matrix select_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(rows[k]);
  return out;
}

Vector select_rows(const Vector& v, const std::vector<Eigen::Index>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[rows[k]];
  return out;
}

}  // namespace grcox
