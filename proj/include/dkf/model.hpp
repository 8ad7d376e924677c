#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dkf/errors.hpp"
#include "dkf/linalg.hpp"
#include "dkf/rng.hpp"

namespace dkf {

/// Time-varying plant: x_{k+1} = A_k x_k + w_k, w_k ~ N(0, Q_k).
///
/// A and Q are callables so analytic definitions are evaluated exactly and
/// tabulated definitions evaluate lazily. The declared bounds are what the
/// validator checks the realized matrices against.
struct SystemModel {
  int state_dim = 0;
  int horizon = 0;
  std::function<Matrix(int)> A;
  std::function<Matrix(int)> Q;

  /// Declared upper bound on lambda_max(A_k A_k^T).
  double a_spectral_bound = std::numeric_limits<double>::infinity();
  /// Declared eigenvalue bounds on Q_k (lower, upper).
  double q_eig_lower = 0.0;
  double q_eig_upper = std::numeric_limits<double>::infinity();

  Matrix dynamics(int k) const {
    Matrix a = A(k);
    require_square(a, "SystemModel.A");
    require_dims(a.rows(), state_dim, "SystemModel.A");
    return a;
  }
  Matrix process_noise(int k) const {
    Matrix q = Q(k);
    require_square(q, "SystemModel.Q");
    require_dims(q.rows(), state_dim, "SystemModel.Q");
    return q;
  }
};

/// One sensor's observation model: y_{k,i} = H_{k,i} x_k + v_{k,i}.
/// An all-zero H is legal; such a sensor contributes no information but
/// still participates in fusion.
struct SensorModel {
  int sensor_id = 0;  // 1-based, display order
  int meas_dim = 0;
  std::function<Matrix(int)> H;
  std::function<Matrix(int)> R;

  Matrix observation(int k) const {
    Matrix h = H(k);
    require_dims(h.rows(), meas_dim, "SensorModel.H rows");
    return h;
  }
  Matrix noise(int k) const {
    Matrix r = R(k);
    require_square(r, "SensorModel.R");
    require_dims(r.rows(), meas_dim, "SensorModel.R");
    return r;
  }
};

/// Recurring windows over which the dynamics stay uniformly nonsingular:
/// lambda_min(A_k A_k^T) >= lower_bound for k in [anchor, anchor+window_len).
struct RegularityWindow {
  std::vector<int> anchors;
  int window_len = 0;
  double lower_bound = 0.0;
};

/// A simulated ground-truth trajectory plus every sensor's measurement
/// stream. Regenerating with the same (root seed, trial) is bit-identical.
struct TrajectoryRecord {
  std::vector<Vector> states;                      // x_0 .. x_K
  std::vector<std::vector<Vector>> measurements;   // [sensor][k]
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
};

/// One step of the plant: A_k x + w_k with w_k drawn via the Cholesky factor
/// of Q_k.
inline Vector step_state(const SystemModel& model, int k, const Vector& x,
                         GaussianStream& rng) {
  if (k >= model.horizon) {
    throw DimensionError("step_state: time index " + std::to_string(k) +
                         " is outside horizon " + std::to_string(model.horizon));
  }
  require_dims(x.size(), model.state_dim, "step_state: state");
  const Matrix a = model.dynamics(k);
  const Matrix l = sampling_factor(model.process_noise(k), "step_state: Q");
  return a * x + sample_gaussian(l, rng);
}

/// One observation: H_{k,i} x + v_{k,i}.
inline Vector observe(const SensorModel& sensor, int k, const Vector& x,
                      GaussianStream& rng) {
  const Matrix h = sensor.observation(k);
  require_dims(x.size(), h.cols(), "observe: state");
  const Matrix l = sampling_factor(sensor.noise(k), "observe: R");
  return h * x + sample_gaussian(l, rng);
}

/// Simulate a trajectory of length steps+1 (x_0..x_steps) with measurements
/// at every step for every sensor. x_0 ~ N(0, P0). Noise streams are split
/// per (trial, sensor) so trials are order-independent.
inline TrajectoryRecord simulate(const SystemModel& model,
                                 const std::vector<SensorModel>& sensors,
                                 const Matrix& p0, int steps,
                                 std::uint64_t root_seed, std::uint64_t trial = 0) {
  if (steps > model.horizon) {
    throw DimensionError("simulate: steps exceed model horizon");
  }
  require_square(p0, "simulate: P0");
  require_dims(p0.rows(), model.state_dim, "simulate: P0");

  TrajectoryRecord record;
  record.seed = root_seed;
  record.trial = trial;
  record.states.reserve(steps + 1);
  record.measurements.resize(sensors.size());

  GaussianStream init_stream(derive_stream_seed(root_seed, trial, StreamKind::InitialState));
  GaussianStream process_stream(derive_stream_seed(root_seed, trial, StreamKind::ProcessNoise));
  std::vector<GaussianStream> meas_streams;
  meas_streams.reserve(sensors.size());
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    meas_streams.emplace_back(
        derive_stream_seed(root_seed, trial, StreamKind::Measurement, i));
    record.measurements[i].reserve(steps + 1);
  }

  const Matrix p0_factor = sampling_factor(p0, "simulate: P0");
  Vector x = sample_gaussian(p0_factor, init_stream);
  for (int k = 0;; ++k) {
    record.states.push_back(x);
    for (std::size_t i = 0; i < sensors.size(); ++i) {
      record.measurements[i].push_back(observe(sensors[i], k, x, meas_streams[i]));
    }
    if (k == steps) break;
    x = step_state(model, k, x, process_stream);
  }
  return record;
}

struct ValidationFinding {
  std::string assumption;
  bool pass = true;
  bool hard = false;  // hard failures make the model unrunnable
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationFinding> findings;
  std::vector<int> singular_steps;  // informational: isolated singular A_k
  double q_eig_min = std::numeric_limits<double>::infinity();
  double q_eig_max = 0.0;
  double a_spectral_max = 0.0;

  bool all_pass() const {
    for (const auto& f : findings)
      if (!f.pass) return false;
    return true;
  }
  bool hard_fail() const {
    for (const auto& f : findings)
      if (!f.pass && f.hard) return true;
    return false;
  }
};

namespace detail {
inline bool is_singular(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const double smax = svd.singularValues().maxCoeff();
  const double smin = svd.singularValues().minCoeff();
  return smax == 0.0 || smin <= 1e-9 * smax;
}
}  // namespace detail

/// Check the model's standing assumptions over its horizon. Isolated
/// singular A_k are reported but are not a failure.
inline ValidationReport validate_assumptions(
    const SystemModel& model, const std::vector<SensorModel>& sensors,
    const RegularityWindow* window = nullptr) {
  ValidationReport report;

  // Process noise: SPD everywhere, eigenvalues within the declared bounds.
  {
    ValidationFinding spd{"process noise positive definite", true, true, ""};
    ValidationFinding bounds{"process noise within declared eigenvalue bounds", true, false, ""};
    for (int k = 0; k < model.horizon; ++k) {
      const Matrix q = model.process_noise(k);
      if (!is_positive_definite(q)) {
        spd.pass = false;
        spd.detail = "Q_k fails Cholesky at k=" + std::to_string(k);
        break;
      }
      const double lo = min_eigenvalue(q);
      const double hi = max_eigenvalue(q);
      report.q_eig_min = std::min(report.q_eig_min, lo);
      report.q_eig_max = std::max(report.q_eig_max, hi);
      if (bounds.pass && (lo < model.q_eig_lower - 1e-12 || hi > model.q_eig_upper + 1e-12)) {
        bounds.pass = false;
        std::ostringstream os;
        os << "eigenvalue range [" << lo << ", " << hi << "] escapes declared ["
           << model.q_eig_lower << ", " << model.q_eig_upper << "] at k=" << k;
        bounds.detail = os.str();
      }
    }
    report.findings.push_back(spd);
    report.findings.push_back(bounds);
  }

  // Measurement noise: PD for every sensor at every step.
  {
    ValidationFinding f{"measurement noise positive definite", true, true, ""};
    for (const auto& sensor : sensors) {
      for (int k = 0; k < model.horizon && f.pass; ++k) {
        if (!is_positive_definite(sensor.noise(k))) {
          f.pass = false;
          f.detail = "R fails Cholesky for sensor " + std::to_string(sensor.sensor_id) +
                     " at k=" + std::to_string(k);
        }
      }
      if (!f.pass) break;
    }
    report.findings.push_back(f);
  }

  // Spectral bound on the dynamics, plus the singular-step scan.
  {
    ValidationFinding f{"dynamics spectral bound", true, false, ""};
    for (int k = 0; k < model.horizon; ++k) {
      const Matrix a = model.dynamics(k);
      const double top = max_eigenvalue(a * a.transpose());
      report.a_spectral_max = std::max(report.a_spectral_max, top);
      if (f.pass && top > model.a_spectral_bound + 1e-12) {
        std::ostringstream os;
        os << "lambda_max(A A^T) = " << top << " exceeds declared bound "
           << model.a_spectral_bound << " at k=" << k;
        f.pass = false;
        f.detail = os.str();
      }
      if (detail::is_singular(a)) report.singular_steps.push_back(k);
    }
    report.findings.push_back(f);
  }

  // Regularity windows, when declared.
  if (window != nullptr && !window->anchors.empty()) {
    ValidationFinding f{"regularity windows", true, false, ""};
    for (std::size_t idx = 0; idx + 1 < window->anchors.size(); ++idx) {
      if (window->anchors[idx + 1] <= window->anchors[idx]) {
        f.pass = false;
        f.detail = "anchors are not strictly increasing";
        break;
      }
    }
    for (const int anchor : window->anchors) {
      if (!f.pass) break;
      for (int s = 0; s < window->window_len; ++s) {
        const int k = anchor + s;
        if (k >= model.horizon) break;
        const Matrix a = model.dynamics(k);
        const double low = min_eigenvalue(a * a.transpose());
        if (low < window->lower_bound) {
          std::ostringstream os;
          os << "lambda_min(A A^T) = " << low << " below " << window->lower_bound
             << " at k=" << k << " (anchor " << anchor << ")";
          f.pass = false;
          f.detail = os.str();
          break;
        }
      }
    }
    report.findings.push_back(f);
  }

  return report;
}

}  // namespace dkf
