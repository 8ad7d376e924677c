#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <string>

#include "dkf/errors.hpp"

namespace dkf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix symmetrize(const Matrix& m) {
  return 0.5 * (m + m.transpose());
}

/// Count of covariance factorizations that only succeeded after a jitter
/// retry. Exposed so long runs can report how often it happened.
inline std::atomic<long>& jitter_event_count() {
  static std::atomic<long> count{0};
  return count;
}

inline Eigen::LLT<Matrix> spd_factor(const Matrix& m, const std::string& context) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(context + ": matrix is not positive definite");
  }
  return llt;
}

/// Cholesky factor with a single jitter retry (1e-12 * tr/n on the diagonal).
inline Eigen::LLT<Matrix> spd_factor_jittered(const Matrix& m, const std::string& context) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const double n = static_cast<double>(m.rows());
  const double jitter = 1e-12 * m.trace() / n;
  Matrix shifted = m + jitter * Matrix::Identity(m.rows(), m.cols());
  llt.compute(shifted);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(context + ": matrix is not positive definite (jitter retry failed)");
  }
  jitter_event_count().fetch_add(1, std::memory_order_relaxed);
  return llt;
}

inline Matrix spd_solve(const Matrix& m, const Matrix& rhs, const std::string& context) {
  return spd_factor_jittered(m, context).solve(rhs);
}

inline Matrix spd_inverse(const Matrix& m, const std::string& context) {
  Matrix inv = spd_factor_jittered(m, context).solve(Matrix::Identity(m.rows(), m.cols()));
  return symmetrize(inv);
}

inline bool is_positive_definite(const Matrix& m) {
  if (m.rows() == 0 || m.rows() != m.cols()) return false;
  return Eigen::LLT<Matrix>(symmetrize(m)).info() == Eigen::Success;
}

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// min eigenvalue of the symmetrized difference b - a; nonnegative iff
/// a <= b in the PSD order.
inline double psd_order_margin(const Matrix& a, const Matrix& b) {
  return min_eigenvalue(symmetrize(b - a));
}

inline void require_square(const Matrix& m, const std::string& what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(what + ": expected a square matrix, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

inline void require_dims(long got, long want, const std::string& what) {
  if (got != want) {
    throw DimensionError(what + ": expected dimension " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

}  // namespace dkf
