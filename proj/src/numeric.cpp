#include "grcox/numeric.hpp"

#include "grcox/errors.hpp"

#include <cmath>
#include <sstream>

namespace grcox {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::substream(std::uint64_t tag) const {
  return RngStream(splitmix64(seed_ ^ 0xa0761d6478bd642fULL) ^ stream_id_,
                   splitmix64(tag + 0xe7037ed1a0b428dbULL));
}

double RngStream::uniform() {
  // 53 random bits, open at zero so log(u) is always finite.
  const std::uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::chi_squared(double dof) {
  std::gamma_distribution<double> gamma(dof / 2.0, 2.0);
  return gamma(engine_);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
  return d(engine_);
}

std::array<double, 2> draw_bivariate_normal(const std::array<double, 2>& mean,
                                            const std::array<double, 2>& var, double rho,
                                            RngStream& rng) {
  if (!(var[0] > 0.0) || !(var[1] > 0.0)) {
    throw ParameterError("draw_bivariate_normal: variances must be positive");
  }
  if (!(std::abs(rho) < 1.0)) {
    throw ParameterError("draw_bivariate_normal: |rho| must be < 1");
  }
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  const double s1 = std::sqrt(var[0]);
  const double s2 = std::sqrt(var[1]);
  return {mean[0] + s1 * z1, mean[1] + s2 * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2)};
}

double draw_scaled_inverse_chisq(double scale, long dof, RngStream& rng) {
  if (dof < 1) throw ParameterError("draw_scaled_inverse_chisq: dof must be >= 1");
  if (!(scale > 0.0)) throw ParameterError("draw_scaled_inverse_chisq: scale must be > 0");
  const double d = static_cast<double>(dof);
  return scale * d / rng.chi_squared(d);
}

double min_eigenvalue(const Matrix& a) {
  if (a.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

namespace {

constexpr double kMaxCondition = 1e12;

void check_square(const Matrix& a, const char* who) {
  if (a.rows() != a.cols()) {
    std::ostringstream os;
    os << who << ": matrix is " << a.rows() << "x" << a.cols() << ", expected square";
    throw DimensionError(os.str());
  }
  if (!a.allFinite()) throw ParameterError(std::string(who) + ": non-finite entries");
}

Eigen::LLT<Matrix> spd_factor(const Matrix& a, const char* who) {
  check_square(a, who);
  const Eigen::Index d = a.rows();
  if (d == 0) return Eigen::LLT<Matrix>(a);

  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || lo * kMaxCondition < hi) {
    // lo can be slightly negative from rounding; the jitter below handles that case only
    // when the matrix is otherwise well conditioned, which this check has ruled out.
    std::ostringstream os;
    os << who << ": matrix singular or ill-conditioned (min eigenvalue " << lo
       << ", max eigenvalue " << hi << ")";
    throw SingularError(os.str(), lo);
  }

  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt;

  Matrix jittered = a;
  jittered.diagonal().array() += 1e-10 * a.trace() / static_cast<double>(d);
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) {
    throw SingularError(std::string(who) + ": Cholesky failed after jitter", lo);
  }
  return llt;
}

}  // namespace

Vector solve_spd(const Matrix& a, const Vector& b) {
  if (b.size() != a.rows()) throw DimensionError("solve_spd: rhs length mismatch");
  return spd_factor(a, "solve_spd").solve(b);
}

Matrix solve_spd(const Matrix& a, const Matrix& b) {
  if (b.rows() != a.rows()) throw DimensionError("solve_spd: rhs rows mismatch");
  return spd_factor(a, "solve_spd").solve(b);
}

Matrix invert_spd(const Matrix& a) {
  auto llt = spd_factor(a, "invert_spd");
  Matrix inv = llt.solve(Matrix::Identity(a.rows(), a.cols()));
  return 0.5 * (inv + inv.transpose());
}

Matrix cholesky_lower(const Matrix& a) { return spd_factor(a, "cholesky_lower").matrixL(); }

}  // namespace grcox
