#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "dkf/errors.hpp"
#include "dkf/linalg.hpp"

namespace dkf {

struct AdaptiveWeightSettings {
  double tolerance = 1e-8;  // relative objective change at which to stop
  int max_iterations = 200;
  int probe_count = 32;  // random feasible-start probes beyond the vertices
};

/// Fusion-weight policy for the distributed filter's local fusion stage.
struct WeightStrategy {
  enum class Kind { Constant, Adaptive };
  Kind kind = Kind::Constant;
  AdaptiveWeightSettings settings;

  static WeightStrategy constant() { return {Kind::Constant, {}}; }
  static WeightStrategy adaptive(AdaptiveWeightSettings s = {}) {
    return {Kind::Adaptive, s};
  }
};

/// The weight-improvement matrix sum_j (w_j - a_j) * info_j together with
/// its strict positive-definiteness flag.
struct DeltaMatrix {
  Matrix delta;
  bool feasible = false;
};

namespace detail {

inline bool delta_feasible(const Matrix& delta) {
  const long n = delta.rows();
  const double scale = delta.trace() / static_cast<double>(n);
  if (!(scale > 0.0)) return false;
  const Matrix shifted = delta - (1e-10 * scale) * Matrix::Identity(n, n);
  return Eigen::LLT<Matrix>(shifted).info() == Eigen::Success;
}

}  // namespace detail

/// Build the improvement matrix for candidate weights w against baseline
/// weights a over the neighbor information matrices (inverse covariances).
inline DeltaMatrix weight_delta(const Vector& w, const Vector& a,
                                const std::vector<Matrix>& info) {
  if (w.size() != a.size() || static_cast<std::size_t>(w.size()) != info.size()) {
    throw DimensionError("weight_delta: weight, baseline and matrix counts differ");
  }
  if (info.empty()) throw DimensionError("weight_delta: no neighbors");
  const long n = info.front().rows();
  Matrix delta = Matrix::Zero(n, n);
  for (std::size_t j = 0; j < info.size(); ++j) {
    delta.noalias() += (w(static_cast<long>(j)) - a(static_cast<long>(j))) * info[j];
  }
  delta = symmetrize(delta);
  return {delta, detail::delta_feasible(delta)};
}

/// Euclidean projection onto the probability simplex.
inline Vector project_to_simplex(const Vector& v) {
  const long m = v.size();
  std::vector<double> u(v.data(), v.data() + m);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (long i = 0; i < m; ++i) {
    cumulative += u[i];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (u[i] > candidate) theta = candidate;
  }
  Vector w(m);
  for (long i = 0; i < m; ++i) w(i) = std::max(v(i) - theta, 0.0);
  return w;
}

struct WeightSolution {
  Vector weights;
  bool fallback = false;  // keep the constant weights; no feasible improvement
  int iterations = 0;
  double objective = 0.0;     // tr(delta^{-1}) at the returned weights
  bool certificate_ok = false;  // block-LMI certificate verified
};

namespace detail {

inline double delta_objective(const Matrix& delta) {
  // tr(delta^{-1}); only called on feasible deltas.
  Eigen::LLT<Matrix> llt(delta);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  return llt.solve(Matrix::Identity(delta.rows(), delta.cols())).trace();
}

/// Verify the Schur-complement certificate: with M diagonal chosen to
/// dominate delta^{-1} row-wise, [[delta, I], [I, M]] must be PD.
inline bool lmi_certificate(const Matrix& delta) {
  const long n = delta.rows();
  Eigen::LLT<Matrix> llt(delta);
  if (llt.info() != Eigen::Success) return false;
  const Matrix inv = llt.solve(Matrix::Identity(n, n));
  Matrix block = Matrix::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = delta;
  block.topRightCorner(n, n) = Matrix::Identity(n, n);
  block.bottomLeftCorner(n, n) = Matrix::Identity(n, n);
  for (long l = 0; l < n; ++l) {
    block(n + l, n + l) = inv.row(l).cwiseAbs().sum() + 1e-9;
  }
  return Eigen::LLT<Matrix>(symmetrize(block)).info() == Eigen::Success;
}

inline Vector dirichlet_point(std::mt19937_64& engine, long m) {
  Vector g(m);
  double total = 0.0;
  for (long i = 0; i < m; ++i) {
    const double u = (static_cast<double>(engine() >> 11) + 1.0) * 0x1.0p-53;
    g(i) = -std::log(u);
    total += g(i);
  }
  return g / total;
}

}  // namespace detail

/// Deterministic feasibility search: maximize lambda_min(delta(w)) over the
/// simplex by projected supergradient ascent (the map is concave in w).
/// Returns a feasible point if one is found, so random probing cannot be the
/// deciding factor for fallback.
inline std::optional<Vector> find_feasible_weights(const Vector& a,
                                                   const std::vector<Matrix>& info,
                                                   int max_iterations = 80) {
  const long m = a.size();
  const long n = info.front().rows();
  double scale = 0.0;
  for (const auto& p : info) scale += p.trace();
  scale /= static_cast<double>(info.size()) * n;
  if (!(scale > 0.0)) return std::nullopt;

  auto lambda_min_of = [&](const Vector& w, Vector* grad) -> double {
    Matrix delta = Matrix::Zero(n, n);
    for (long j = 0; j < m; ++j) delta.noalias() += (w(j) - a(j)) * info[j];
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(delta));
    if (grad != nullptr) {
      const Vector v = es.eigenvectors().col(0);
      grad->resize(m);
      for (long j = 0; j < m; ++j) (*grad)(j) = v.dot(info[j] * v);
    }
    return es.eigenvalues()(0);
  };

  std::vector<Vector> starts;
  starts.push_back(Vector::Constant(m, 1.0 / m));
  for (long j = 0; j < m; ++j) {
    Vector vertex = Vector::Zero(m);
    vertex(j) = 1.0;
    starts.push_back(vertex);
  }

  for (const Vector& start : starts) {
    Vector w = start;
    Vector grad;
    double value = lambda_min_of(w, &grad);
    double step = 1.0 / scale;
    for (int iter = 0; iter < max_iterations; ++iter) {
      if (weight_delta(w, a, info).feasible) return w;
      bool moved = false;
      while (step > 1e-16 / scale) {
        const Vector w_next = project_to_simplex(w + step * grad);
        if ((w_next - w).squaredNorm() < 1e-28) break;
        Vector grad_next;
        const double value_next = lambda_min_of(w_next, &grad_next);
        if (value_next > value) {
          w = w_next;
          value = value_next;
          grad = grad_next;
          step *= 2.0;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    if (weight_delta(w, a, info).feasible) return w;
  }
  return std::nullopt;
}

/// Adaptive fusion weights: minimize tr(delta(w)^{-1}) over the simplex
/// subject to delta(w) > 0, by feasible-start projected gradient descent.
/// Returns fallback when no probe point is feasible (the caller keeps the
/// constant weights, so fusion always proceeds). A warm start (e.g. the
/// previous step's solution) joins the probe set when given.
inline WeightSolution solve_adaptive_weights(const Vector& a,
                                             const std::vector<Matrix>& info,
                                             const AdaptiveWeightSettings& settings = {},
                                             const Vector* warm_start = nullptr) {
  const long m = a.size();
  if (static_cast<std::size_t>(m) != info.size()) {
    throw DimensionError("solve_adaptive_weights: baseline/matrix counts differ");
  }
  WeightSolution result;
  result.weights = a;
  if (m <= 1) {
    result.fallback = true;
    return result;
  }

  auto objective_at = [&](const Vector& w) -> double {
    const DeltaMatrix d = weight_delta(w, a, info);
    if (!d.feasible) return std::numeric_limits<double>::infinity();
    return detail::delta_objective(d.delta);
  };

  // Feasible-start probe: warm start and simplex vertices first; the random
  // Dirichlet probes only run when none of those is feasible (the descent
  // converges to the same optimum from any feasible start, so extra starts
  // buy nothing).
  Vector best = a;
  double best_f = std::numeric_limits<double>::infinity();
  if (warm_start != nullptr && warm_start->size() == m) {
    const double f = objective_at(*warm_start);
    if (f < best_f) {
      best_f = f;
      best = *warm_start;
    }
  }
  for (long j = 0; j < m; ++j) {
    Vector vertex = Vector::Zero(m);
    vertex(j) = 1.0;
    const double f = objective_at(vertex);
    if (f < best_f) {
      best_f = f;
      best = vertex;
    }
  }
  if (!std::isfinite(best_f)) {
    std::mt19937_64 probe_engine(0x5eedbeefULL + static_cast<std::uint64_t>(m));
    for (int p = 0; p < settings.probe_count; ++p) {
      const Vector w = detail::dirichlet_point(probe_engine, m);
      const double f = objective_at(w);
      if (f < best_f) {
        best_f = f;
        best = w;
      }
    }
  }
  if (!std::isfinite(best_f)) {
    // Random probes found nothing either; settle feasibility
    // deterministically before giving up.
    const auto found = find_feasible_weights(a, info);
    if (!found) {
      result.fallback = true;
      return result;
    }
    best = *found;
    best_f = objective_at(best);
  }

  // Projected gradient with backtracking. The objective blows up at the
  // feasibility boundary, so infeasible trial points are simply rejected.
  Vector w = best;
  double f = best_f;
  double step = 1.0;
  const long n = info.front().rows();
  int iterations = 0;
  for (; iterations < settings.max_iterations; ++iterations) {
    const DeltaMatrix d = weight_delta(w, a, info);
    const Matrix inv =
        Eigen::LLT<Matrix>(d.delta).solve(Matrix::Identity(n, n));
    const Matrix inv_sq = inv * inv;
    Vector grad(m);
    for (long j = 0; j < m; ++j) {
      grad(j) = -(inv_sq.cwiseProduct(info[j])).sum();
    }

    step = std::min(step * 2.0, 1e6);
    bool accepted = false;
    Vector w_next;
    double f_next = f;
    while (step > 1e-18) {
      w_next = project_to_simplex(w - step * grad);
      const double move_sq = (w_next - w).squaredNorm();
      if (move_sq < 1e-28) break;  // pinned to the current point
      f_next = objective_at(w_next);
      if (f_next <= f - 1e-4 * move_sq / step) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double rel_change = (f - f_next) / std::max(1.0, std::abs(f));
    w = w_next;
    f = f_next;
    if (rel_change < settings.tolerance) break;
  }

  // Exact simplex polish; the change is at rounding scale.
  w = w.cwiseMax(0.0);
  w /= w.sum();

  // The block-LMI certificate must verify before the weights are trusted;
  // a numerically marginal improvement is not worth leaving the safe
  // constant weights for.
  const DeltaMatrix final_delta = weight_delta(w, a, info);
  if (!final_delta.feasible || !detail::lmi_certificate(final_delta.delta)) {
    result.weights = a;
    result.fallback = true;
    return result;
  }
  result.weights = w;
  result.iterations = iterations;
  result.objective = detail::delta_objective(final_delta.delta);
  result.certificate_ok = true;
  return result;
}

/// Ordering margin between the fused covariance under adaptive weights and
/// under constant weights: min eigenvalue of (p_constant - p_adaptive).
/// Nonnegative means the adaptive bound dominates (is tighter).
inline double fused_order_margin(const Matrix& p_adaptive, const Matrix& p_constant) {
  return psd_order_margin(p_adaptive, p_constant);
}

}  // namespace dkf
