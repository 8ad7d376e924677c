#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "dkf/ci_weights.hpp"
#include "dkf/errors.hpp"
#include "dkf/linalg.hpp"
#include "dkf/model.hpp"
#include "dkf/observability.hpp"
#include "dkf/topology.hpp"

namespace dkf {

/// One sensor's fused estimate pair (state, covariance) at a time step.
struct NodeEstimate {
  Vector state;
  Matrix covariance;
  int step = 0;
  int sensor_id = 0;
};

struct PredictedEstimate {
  Vector state;
  Matrix covariance;
};

/// Measurement-updated estimate along with the gain that produced it.
struct UpdatedEstimate {
  Vector state;
  Matrix covariance;
  Matrix gain;
};

inline PredictedEstimate predict(const NodeEstimate& est, const Matrix& dynamics,
                                 const Matrix& process_noise) {
  require_dims(dynamics.cols(), est.state.size(), "predict: dynamics");
  PredictedEstimate out;
  out.state = dynamics * est.state;
  out.covariance =
      symmetrize(dynamics * est.covariance * dynamics.transpose() + process_noise);
  return out;
}

/// Kalman measurement update. The gain solves against the innovation
/// covariance by Cholesky; the innovation covariance must be PD.
inline UpdatedEstimate update(const PredictedEstimate& pred, const Vector& y,
                              const Matrix& obs, const Matrix& noise) {
  require_dims(obs.cols(), pred.state.size(), "update: observation");
  require_dims(y.size(), obs.rows(), "update: measurement");
  const Matrix hp = obs * pred.covariance;  // m x n
  const Matrix innovation_cov = symmetrize(hp * obs.transpose() + noise);
  UpdatedEstimate out;
  out.gain =
      spd_solve(innovation_cov, hp, "update: innovation covariance").transpose();
  out.state = pred.state + out.gain * (y - obs * pred.state);
  const long n = pred.state.size();
  out.covariance =
      symmetrize((Matrix::Identity(n, n) - out.gain * obs) * pred.covariance);
  return out;
}

/// What one node publishes to its neighbors after the measurement update:
/// the updated state and the inverse of the updated covariance (computed
/// once and shared so fusion does not refactor it).
struct NeighborUpdate {
  int sensor = 0;
  Vector state;
  Matrix information;
};

/// Covariance-intersection fusion over a neighbor slice. Weights must lie
/// on the simplex; the fused pair is
///   P = (sum_j w_j info_j)^{-1},  x = P * sum_j w_j info_j x_j.
inline std::pair<Vector, Matrix> ci_fuse(const std::vector<NeighborUpdate>& slice,
                                         const Vector& weights) {
  if (slice.empty()) throw DimensionError("ci_fuse: empty neighbor slice");
  if (weights.size() != static_cast<long>(slice.size())) {
    throw DimensionError("ci_fuse: weight count does not match neighbor slice");
  }
  double total = 0.0;
  for (long j = 0; j < weights.size(); ++j) {
    if (weights(j) < -1e-12) {
      throw ContractError("ci_fuse: negative fusion weight " + std::to_string(weights(j)));
    }
    total += weights(j);
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractError("ci_fuse: fusion weights sum to " + std::to_string(total));
  }
  const long n = slice.front().state.size();
  Matrix info = Matrix::Zero(n, n);
  Vector info_state = Vector::Zero(n);
  for (std::size_t j = 0; j < slice.size(); ++j) {
    const double w = weights(static_cast<long>(j));
    if (w == 0.0) continue;
    info.noalias() += w * slice[j].information;
    info_state.noalias() += w * (slice[j].information * slice[j].state);
  }
  Matrix fused_cov = spd_inverse(symmetrize(info), "ci_fuse: fused information");
  return {fused_cov * info_state, std::move(fused_cov)};
}

/// Centralized Kalman filter over the stacked measurement vector: the
/// optimal baseline with every sensor's data in one place.
class CentralizedFilter {
 public:
  CentralizedFilter(SystemModel model, std::vector<SensorModel> sensors, Matrix p0)
      : model_(std::move(model)), sensors_(std::move(sensors)) {
    estimate_.state = Vector::Zero(model_.state_dim);
    estimate_.covariance = std::move(p0);
    estimate_.step = 0;
  }

  /// Advance from step k-1 to k, consuming every sensor's measurement at k.
  void step(int k, const std::vector<Vector>& measurements) {
    check_step(k, estimate_.step);
    const PredictedEstimate pred =
        predict(estimate_, model_.dynamics(k - 1), model_.process_noise(k - 1));
    const auto [h, r] = stack_observations(sensors_, k);
    long rows = 0;
    Vector y(h.rows());
    for (std::size_t i = 0; i < sensors_.size(); ++i) {
      y.segment(rows, sensors_[i].meas_dim) = measurements[i];
      rows += sensors_[i].meas_dim;
    }
    const UpdatedEstimate upd = update(pred, y, h, r);
    estimate_.state = upd.state;
    estimate_.covariance = upd.covariance;
    estimate_.step = k;
  }

  const NodeEstimate& estimate() const { return estimate_; }

  static void check_step(int k, int current) {
    if (k != current + 1) {
      throw ContractError("filter step: expected step " + std::to_string(current + 1) +
                          ", got " + std::to_string(k));
    }
  }

 private:
  SystemModel model_;
  std::vector<SensorModel> sensors_;
  NodeEstimate estimate_;
};

/// Networked Kalman filter with the optimal per-sensor gain and
/// trace-optimal matrix fusion weights: each node combines its neighbors'
/// updates with the minimum-variance unbiased weights computed from the
/// exact cross-covariance table. Maintaining that table makes the filter
/// centralized in cost (O(N^2 n^2) memory), which is why it is a baseline
/// rather than a scalable algorithm.
class NetworkedOptimalFilter {
 public:
  NetworkedOptimalFilter(SystemModel model, std::vector<SensorModel> sensors,
                         NetworkTopology topology, const Matrix& p0)
      : model_(std::move(model)),
        sensors_(std::move(sensors)),
        topology_(std::move(topology)) {
    const int n = model_.state_dim;
    const int count = topology_.size;
    states_.resize(count);
    cross_.assign(static_cast<std::size_t>(count) * count, p0);
    for (int i = 0; i < count; ++i) {
      states_[i].state = Vector::Zero(n);
      states_[i].covariance = p0;
      states_[i].step = 0;
      states_[i].sensor_id = i + 1;
    }
  }

  void step(int k, const std::vector<Vector>& measurements) {
    CentralizedFilter::check_step(k, states_.front().step);
    const int count = topology_.size;
    const long n = model_.state_dim;
    const Matrix a = model_.dynamics(k - 1);
    const Matrix q = model_.process_noise(k - 1);
    const Matrix eye = Matrix::Identity(n, n);

    // Prediction, including every cross term.
    std::vector<Matrix> bar(cross_.size());
    std::vector<Vector> bar_x(count);
    for (int i = 0; i < count; ++i) {
      bar_x[i] = a * states_[i].state;
      for (int j = 0; j < count; ++j) {
        bar[idx(i, j)] = a * cross_[idx(i, j)] * a.transpose() + q;
      }
      bar[idx(i, i)] = symmetrize(bar[idx(i, i)]);
    }

    // Measurement update per sensor, then every pairwise updated covariance.
    std::vector<Matrix> closure(count);  // I - K_i H_i
    std::vector<Vector> phi(count);
    for (int i = 0; i < count; ++i) {
      PredictedEstimate pred{bar_x[i], bar[idx(i, i)]};
      const UpdatedEstimate upd =
          update(pred, measurements[i], sensors_[i].observation(k), sensors_[i].noise(k));
      phi[i] = upd.state;
      closure[i] = eye - upd.gain * sensors_[i].observation(k);
    }
    std::vector<Matrix> tilde(cross_.size());
    for (int j = 0; j < count; ++j) {
      tilde[idx(j, j)] = symmetrize(closure[j] * bar[idx(j, j)]);
      for (int s = j + 1; s < count; ++s) {
        tilde[idx(j, s)] = closure[j] * bar[idx(j, s)] * closure[s].transpose();
        tilde[idx(s, j)] = tilde[idx(j, s)].transpose();
      }
    }

    // Local fusion: per receiver, the matrix weights minimizing the fused
    // covariance trace subject to summing to the identity, solved from the
    // joint covariance of the neighbor updates. The realized weights then
    // propagate the whole cross-covariance table exactly.
    std::vector<std::vector<Matrix>> fusion_weights(count);
    for (int i = 0; i < count; ++i) {
      fusion_weights[i] = optimal_fusion_weights(i, tilde);
      Vector fused = Vector::Zero(n);
      const auto& nb = topology_.neighbors[i];
      for (std::size_t t = 0; t < nb.size(); ++t) {
        fused.noalias() += fusion_weights[i][t] * phi[nb[t]];
      }
      states_[i].state = fused;
      states_[i].step = k;
    }
    std::vector<Matrix> next(cross_.size());
    for (int i = 0; i < count; ++i) {
      const auto& nbi = topology_.neighbors[i];
      for (int l = i; l < count; ++l) {
        const auto& nbl = topology_.neighbors[l];
        Matrix sum = Matrix::Zero(n, n);
        for (std::size_t tj = 0; tj < nbi.size(); ++tj) {
          Matrix partial = Matrix::Zero(n, n);
          for (std::size_t ts = 0; ts < nbl.size(); ++ts) {
            partial.noalias() +=
                tilde[idx(nbi[tj], nbl[ts])] * fusion_weights[l][ts].transpose();
          }
          sum.noalias() += fusion_weights[i][tj] * partial;
        }
        next[idx(i, l)] = sum;
        if (l != i) next[idx(l, i)] = sum.transpose();
      }
      next[idx(i, i)] = symmetrize(next[idx(i, i)]);
    }
    cross_ = std::move(next);
    for (int i = 0; i < count; ++i) states_[i].covariance = cross_[idx(i, i)];
  }

  const std::vector<NodeEstimate>& estimates() const { return states_; }
  const Matrix& cross_covariance(int i, int j) const { return cross_[idx(i, j)]; }

 private:
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * topology_.size + j;
  }

  /// Minimum-trace unbiased fusion weights for receiver i: minimize
  /// tr(sum_{j,s} W_j tilde_{j,s} W_s^T) subject to sum_j W_j = I, via the
  /// KKT system of the stacked joint covariance. A diagonal ridge keeps the
  /// system solvable when neighbor updates are perfectly correlated (as at
  /// the shared initialization).
  std::vector<Matrix> optimal_fusion_weights(int i,
                                             const std::vector<Matrix>& tilde) const {
    const auto& nb = topology_.neighbors[i];
    const long m = static_cast<long>(nb.size());
    const long n = model_.state_dim;
    Matrix joint(m * n, m * n);
    for (long j = 0; j < m; ++j) {
      for (long s = 0; s < m; ++s) {
        joint.block(j * n, s * n, n, n) = tilde[idx(nb[j], nb[s])];
      }
    }
    const double ridge = 1e-12 * std::max(joint.trace() / (m * n), 1e-300);
    Matrix kkt = Matrix::Zero((m + 1) * n, (m + 1) * n);
    kkt.topLeftCorner(m * n, m * n) =
        symmetrize(joint) + ridge * Matrix::Identity(m * n, m * n);
    for (long j = 0; j < m; ++j) {
      kkt.block(j * n, m * n, n, n) = Matrix::Identity(n, n);
      kkt.block(m * n, j * n, n, n) = Matrix::Identity(n, n);
    }
    Matrix rhs = Matrix::Zero((m + 1) * n, n);
    rhs.bottomRows(n) = Matrix::Identity(n, n);
    Eigen::FullPivLU<Matrix> lu(kkt);
    if (!lu.isInvertible()) {
      throw NumericalError("table1 fusion: degenerate weight system at node " +
                           std::to_string(i + 1));
    }
    const Matrix solution = lu.solve(rhs);
    std::vector<Matrix> weights(nb.size());
    for (long j = 0; j < m; ++j) {
      weights[static_cast<std::size_t>(j)] = solution.middleRows(j * n, n).transpose();
    }
    return weights;
  }

  SystemModel model_;
  std::vector<SensorModel> sensors_;
  NetworkTopology topology_;
  std::vector<NodeEstimate> states_;
  std::vector<Matrix> cross_;
};

/// Per-node weight diagnostics for one fusion step.
struct FusionDiagnostics {
  int sensor = 0;
  Vector weights;
  bool feasible = false;  // adaptive weights were feasible and applied
  int iterations = 0;
};

/// Consistent distributed Kalman filter: per-sensor predict + update, then
/// covariance-intersection fusion over the neighbor slice only. Each node
/// reads exactly its neighbors' published (state, information) pairs.
class ConsistentDistributedFilter {
 public:
  ConsistentDistributedFilter(SystemModel model, std::vector<SensorModel> sensors,
                              NetworkTopology topology, WeightStrategy strategy,
                              const Matrix& p0)
      : model_(std::move(model)),
        sensors_(std::move(sensors)),
        topology_(std::move(topology)),
        strategy_(strategy) {
    const int n = model_.state_dim;
    states_.resize(topology_.size);
    warm_weights_.assign(topology_.size, Vector());
    for (int i = 0; i < topology_.size; ++i) {
      states_[i].state = Vector::Zero(n);
      states_[i].covariance = p0;
      states_[i].step = 0;
      states_[i].sensor_id = i + 1;
    }
  }

  void step(int k, const std::vector<Vector>& measurements) {
    CentralizedFilter::check_step(k, states_.front().step);
    const int count = topology_.size;
    const Matrix a = model_.dynamics(k - 1);
    const Matrix q = model_.process_noise(k - 1);

    // Phase 1: every node predicts, updates and publishes. The inverse of
    // the updated covariance is computed once here and shared.
    std::vector<NeighborUpdate> published(count);
    for (int i = 0; i < count; ++i) {
      const PredictedEstimate pred = predict(states_[i], a, q);
      try {
        const UpdatedEstimate upd = update(pred, measurements[i],
                                           sensors_[i].observation(k),
                                           sensors_[i].noise(k));
        published[i].state = upd.state;
        published[i].information =
            spd_inverse(upd.covariance, "updated covariance");
      } catch (const NumericalError& e) {
        throw NumericalError("sensor " + std::to_string(i + 1) + ", step " +
                             std::to_string(k) + ": " + e.what());
      }
      published[i].sensor = i + 1;
    }

    // Phase 2: fusion from the frozen snapshot, neighbor slices only.
    last_diagnostics_.clear();
    last_diagnostics_.reserve(count);
    for (int i = 0; i < count; ++i) {
      const auto& nb = topology_.neighbors[i];
      std::vector<NeighborUpdate> slice;
      slice.reserve(nb.size());
      std::vector<Matrix> info;
      info.reserve(nb.size());
      for (const int j : nb) {
        slice.push_back(published[j]);
        info.push_back(published[j].information);
      }
      const Vector baseline = topology_.neighbor_weights(i);

      FusionDiagnostics diag;
      diag.sensor = i + 1;
      Vector w = baseline;
      if (strategy_.kind == WeightStrategy::Kind::Adaptive) {
        const Vector* warm =
            warm_weights_[i].size() == baseline.size() ? &warm_weights_[i] : nullptr;
        const WeightSolution sol =
            solve_adaptive_weights(baseline, info, strategy_.settings, warm);
        diag.iterations = sol.iterations;
        if (sol.fallback) {
          ++fallback_count_;
        } else {
          w = sol.weights;
          warm_weights_[i] = w;
          diag.feasible = true;
        }
      }
      diag.weights = w;
      last_diagnostics_.push_back(std::move(diag));

      auto [fused_state, fused_cov] = ci_fuse(slice, w);
      states_[i].state = std::move(fused_state);
      states_[i].covariance = std::move(fused_cov);
      states_[i].step = k;
    }
  }

  const std::vector<NodeEstimate>& estimates() const { return states_; }
  const std::vector<FusionDiagnostics>& last_diagnostics() const {
    return last_diagnostics_;
  }
  long fallback_count() const { return fallback_count_; }

 private:
  SystemModel model_;
  std::vector<SensorModel> sensors_;
  NetworkTopology topology_;
  WeightStrategy strategy_;
  std::vector<NodeEstimate> states_;
  std::vector<Vector> warm_weights_;  // last applied adaptive weights per node
  std::vector<FusionDiagnostics> last_diagnostics_;
  long fallback_count_ = 0;
};

}  // namespace dkf
