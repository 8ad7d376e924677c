#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

#include "dkf/errors.hpp"
#include "dkf/linalg.hpp"

namespace dkf {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Purpose tags for sub-streams split off a single root seed. Streams are
/// derived by counter, not by sequential draws, so trials can run in any
/// order (or in parallel) and still reproduce bit-identically.
enum class StreamKind : std::uint64_t {
  InitialState = 1,
  ProcessNoise = 2,
  Measurement = 3,
  Bootstrap = 4,
  SensorAssignment = 5,
};

inline std::uint64_t derive_stream_seed(std::uint64_t root, std::uint64_t trial,
                                        StreamKind kind, std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(root);
  s = splitmix64(s ^ (0x100000001b3ULL * (trial + 1)));
  s = splitmix64(s ^ (static_cast<std::uint64_t>(kind) << 32));
  s = splitmix64(s ^ index);
  return s;
}

/// Deterministic Gaussian stream. Box-Muller on top of mt19937_64 keeps the
/// draw sequence independent of the standard library's normal_distribution,
/// which is implementation-defined.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in (0, 1].
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Vector normal_vector(int n) {
    Vector z(n);
    for (int i = 0; i < n; ++i) z(i) = normal();
    return z;
  }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return engine_() % n;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Cholesky factor of a covariance used for sampling. A zero matrix is
/// accepted (noise-free test models); anything else must be SPD.
inline Matrix sampling_factor(const Matrix& cov, const std::string& context) {
  require_square(cov, context);
  if (cov.isZero(0.0)) return Matrix::Zero(cov.rows(), cov.cols());
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw ModelError(context + ": covariance is not positive definite");
  }
  return llt.matrixL();
}

/// Draw from N(0, cov) given its sampling factor L (cov = L L^T).
inline Vector sample_gaussian(const Matrix& factor_l, GaussianStream& stream) {
  return factor_l * stream.normal_vector(static_cast<int>(factor_l.cols()));
}

}  // namespace dkf
