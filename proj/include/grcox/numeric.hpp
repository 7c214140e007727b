#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>

namespace grcox {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexVector = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, 1>;

/// Deterministic random-variate stream keyed by (seed, stream_id).
///
/// The engine state is derived by hashing both keys through SplitMix64, so
/// stream r of a Monte Carlo batch is the same no matter which worker runs it.
/// Streams are plain values: copy one to fork an identical sequence.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// Child stream for a sub-task; independent of the parent's consumption.
  RngStream substream(std::uint64_t tag) const;

  double uniform();
  double normal();
  double chi_squared(double dof);
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

std::array<double, 2> draw_bivariate_normal(const std::array<double, 2>& mean,
                                            const std::array<double, 2>& var, double rho,
                                            RngStream& rng);

/// scale * dof / chi2(dof).
double draw_scaled_inverse_chisq(double scale, long dof, RngStream& rng);

/// Cholesky solve with one diagonal-jitter retry (1e-10 * trace / dim).
/// Throws SingularError when A is not SPD or its condition number exceeds 1e12.
Vector solve_spd(const Matrix& a, const Vector& b);
Matrix solve_spd(const Matrix& a, const Matrix& b);
Matrix invert_spd(const Matrix& a);

/// Lower Cholesky factor of an SPD matrix under the same rules as solve_spd.
Matrix cholesky_lower(const Matrix& a);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& a);

inline double expit(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool all_finite(const Matrix& m);

}  // namespace grcox
