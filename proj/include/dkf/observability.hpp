#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dkf/errors.hpp"
#include "dkf/linalg.hpp"
#include "dkf/model.hpp"

namespace dkf {

/// Windowed observability Gramian with its eigenvalue extremes.
struct GramianReport {
  int window_start = 0;
  int window_len = 0;  // steps summed beyond window_start
  Matrix gramian;
  double alpha_hat = 0.0;  // min eigenvalue
  double beta_hat = 0.0;   // max eigenvalue
  double condition = std::numeric_limits<double>::infinity();
};

/// State-transition product over [k, j): A_{j-1} ... A_k, identity for j == k.
inline Matrix transition(const SystemModel& model, int j, int k) {
  if (j < k) {
    throw DimensionError("transition: end index " + std::to_string(j) +
                         " precedes start index " + std::to_string(k));
  }
  Matrix phi = Matrix::Identity(model.state_dim, model.state_dim);
  for (int t = k; t < j; ++t) phi = model.dynamics(t) * phi;
  return phi;
}

/// Stacked observation matrix and block-diagonal measurement covariance over
/// all sensors, in sensor order.
inline std::pair<Matrix, Matrix> stack_observations(const std::vector<SensorModel>& sensors,
                                                    int k) {
  long rows = 0;
  for (const auto& s : sensors) rows += s.meas_dim;
  if (sensors.empty()) throw DimensionError("stack_observations: no sensors");
  const long n = sensors.front().observation(k).cols();
  Matrix h = Matrix::Zero(rows, n);
  Matrix r = Matrix::Zero(rows, rows);
  long at = 0;
  for (const auto& s : sensors) {
    h.middleRows(at, s.meas_dim) = s.observation(k);
    r.block(at, at, s.meas_dim, s.meas_dim) = s.noise(k);
    at += s.meas_dim;
  }
  return {h, r};
}

/// Observability Gramian sum_{j=k}^{k+window} Phi^T H^T R^{-1} H Phi. The
/// block-diagonal structure of R lets each sensor contribute independently.
inline GramianReport observability_gramian(const SystemModel& model,
                                           const std::vector<SensorModel>& sensors,
                                           int k, int window) {
  if (window < 0) throw DimensionError("observability_gramian: negative window");
  if (k + window > model.horizon) {
    throw DimensionError("observability_gramian: window escapes horizon");
  }
  const int n = model.state_dim;
  Matrix gram = Matrix::Zero(n, n);
  Matrix phi = Matrix::Identity(n, n);
  for (int j = k; j <= k + window; ++j) {
    for (const auto& sensor : sensors) {
      const Matrix h = sensor.observation(j) * phi;
      gram.noalias() += h.transpose() *
                        spd_solve(sensor.noise(j), h, "observability_gramian: R");
    }
    if (j < k + window) phi = model.dynamics(j) * phi;
  }
  GramianReport report;
  report.window_start = k;
  report.window_len = window;
  report.gramian = symmetrize(gram);
  report.alpha_hat = min_eigenvalue(report.gramian);
  report.beta_hat = max_eigenvalue(report.gramian);
  report.condition = report.alpha_hat > 0.0
                         ? report.beta_hat / report.alpha_hat
                         : std::numeric_limits<double>::infinity();
  return report;
}

struct UcoReport {
  bool uniformly_observable = false;
  double min_alpha = std::numeric_limits<double>::infinity();
  double max_beta = 0.0;
  int worst_window_start = 0;
  int window_len = 0;
  int windows_checked = 0;
};

/// Sweep window starts over [k_lo, k_hi] and test uniform complete
/// observability against the required eigenvalue thresholds.
inline UcoReport check_uco(const SystemModel& model,
                           const std::vector<SensorModel>& sensors, int window,
                           int k_lo, int k_hi, double alpha_required = 1e-12,
                           double beta_allowed = std::numeric_limits<double>::infinity()) {
  UcoReport report;
  report.window_len = window;
  for (int k = k_lo; k <= k_hi && k + window <= model.horizon; ++k) {
    const GramianReport g = observability_gramian(model, sensors, k, window);
    if (g.alpha_hat < report.min_alpha) {
      report.min_alpha = g.alpha_hat;
      report.worst_window_start = k;
    }
    report.max_beta = std::max(report.max_beta, g.beta_hat);
    ++report.windows_checked;
  }
  report.uniformly_observable = report.windows_checked > 0 &&
                                report.min_alpha >= alpha_required &&
                                report.max_beta <= beta_allowed;
  return report;
}

/// Gramian conjugated by the inverse transition over the window,
/// sum_j Phi_{k+window,j}^{-T} H^T R^{-1} H Phi_{k+window,j}^{-1}.
/// Diagnostic only; requires every A in the window to be invertible.
inline Matrix conjugated_gramian(const SystemModel& model,
                                 const std::vector<SensorModel>& sensors, int k,
                                 int window) {
  const Matrix phi_full = transition(model, k + window, k);
  Eigen::FullPivLU<Matrix> lu(phi_full);
  if (!lu.isInvertible()) {
    throw NumericalError("conjugated_gramian: transition product is singular over the window");
  }
  const Matrix f = lu.inverse();
  const GramianReport g = observability_gramian(model, sensors, k, window);
  return symmetrize(f.transpose() * g.gramian * f);
}

}  // namespace dkf
