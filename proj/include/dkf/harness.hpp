#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dkf/ci_weights.hpp"
#include "dkf/errors.hpp"
#include "dkf/filters.hpp"
#include "dkf/linalg.hpp"
#include "dkf/model.hpp"
#include "dkf/scenario.hpp"

namespace dkf {

struct RunOptions {
  int threads = 0;  // 0: hardware concurrency
  bool verbose_weights = false;
  int bootstrap_resamples = 200;
  double steady_fraction = 0.25;  // last fraction of the horizon
};

struct WeightLogRow {
  int k = 0;
  int sensor = 0;
  bool feasible = false;
  int iterations = 0;
  std::vector<double> weights;
};

/// Per-filter Monte Carlo results. Covariances and weights are collected
/// from trial 0; for these linear filters they do not depend on the data.
struct FilterRunMetrics {
  std::string filter;
  int horizon = 0;
  int trials = 0;
  int sensor_count = 0;
  int state_dim = 0;

  std::vector<double> mse;        // network MSE per step
  std::vector<double> mse_se;     // standard error over trials
  std::vector<double> trace_sum;  // sum_i tr(P_{k,i})
  std::vector<Matrix> covariances;    // [(K+1) * N]
  std::vector<double> errors;         // [t][k][sensor][component]
  std::vector<double> per_trial_mse;  // [t][k]
  std::vector<double> trial0_states;  // [k][sensor][component]
  long fallback_count = 0;
  std::vector<WeightLogRow> weight_log;

  const Matrix& covariance(int k, int sensor) const {
    return covariances[static_cast<std::size_t>(k) * sensor_count + sensor];
  }
  Eigen::Map<const Vector> error(int trial, int k, int sensor) const {
    const std::size_t at =
        ((static_cast<std::size_t>(trial) * (horizon + 1) + k) * sensor_count + sensor) *
        state_dim;
    return {errors.data() + at, state_dim};
  }
  double trial_mse(int trial, int k) const {
    return per_trial_mse[static_cast<std::size_t>(trial) * (horizon + 1) + k];
  }
};

struct ExperimentResult {
  std::string scenario_name;
  std::uint64_t seed = 0;
  int horizon = 0;
  int trials = 0;
  Json notes;
  std::vector<FilterRunMetrics> filters;

  const FilterRunMetrics* find(const std::string& name) const {
    for (const auto& f : filters)
      if (f.filter == name) return &f;
    return nullptr;
  }
};

namespace detail {

/// Uniform stepping interface over the three filter families. The
/// centralized filter exposes its single estimate under every sensor index
/// so the metric arrays stay rectangular.
class FilterAdapter {
 public:
  virtual ~FilterAdapter() = default;
  virtual void step(int k, const std::vector<Vector>& measurements) = 0;
  virtual const NodeEstimate& node(int sensor) const = 0;
  virtual const ConsistentDistributedFilter* distributed() const { return nullptr; }
};

class CentralizedAdapter final : public FilterAdapter {
 public:
  CentralizedAdapter(const ScenarioConfig& cfg)
      : filter_(cfg.model, cfg.sensors, cfg.initial_covariance()) {}
  void step(int k, const std::vector<Vector>& ys) override { filter_.step(k, ys); }
  const NodeEstimate& node(int) const override { return filter_.estimate(); }

 private:
  CentralizedFilter filter_;
};

class NetworkedAdapter final : public FilterAdapter {
 public:
  NetworkedAdapter(const ScenarioConfig& cfg)
      : filter_(cfg.model, cfg.sensors, cfg.topology, cfg.initial_covariance()) {}
  void step(int k, const std::vector<Vector>& ys) override { filter_.step(k, ys); }
  const NodeEstimate& node(int sensor) const override {
    return filter_.estimates()[sensor];
  }

 private:
  NetworkedOptimalFilter filter_;
};

class CdkfAdapter final : public FilterAdapter {
 public:
  CdkfAdapter(const ScenarioConfig& cfg, WeightStrategy strategy)
      : filter_(cfg.model, cfg.sensors, cfg.topology, strategy,
                cfg.initial_covariance()) {}
  void step(int k, const std::vector<Vector>& ys) override { filter_.step(k, ys); }
  const NodeEstimate& node(int sensor) const override {
    return filter_.estimates()[sensor];
  }
  const ConsistentDistributedFilter* distributed() const override { return &filter_; }

 private:
  ConsistentDistributedFilter filter_;
};

inline std::unique_ptr<FilterAdapter> make_filter(const std::string& name,
                                                  const ScenarioConfig& cfg) {
  if (name == "ckf") return std::make_unique<CentralizedAdapter>(cfg);
  if (name == "table1") return std::make_unique<NetworkedAdapter>(cfg);
  if (name == "cdkf-constant")
    return std::make_unique<CdkfAdapter>(cfg, WeightStrategy::constant());
  if (name == "cdkf-adaptive")
    return std::make_unique<CdkfAdapter>(cfg, WeightStrategy::adaptive(cfg.weight_settings));
  throw ConfigError("unknown filter \"" + name + "\"");
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

/// Run every selected filter over the same simulated trials (common random
/// numbers, so cross-filter comparisons are paired). Trials are distributed
/// over a thread pool; results land in per-trial slots, so the outcome is
/// independent of scheduling.
inline ExperimentResult run_experiment(const ScenarioConfig& cfg,
                                       const RunOptions& opt = {}) {
  const int k_count = cfg.horizon + 1;
  const int n = cfg.model.state_dim;
  const int sensor_count = static_cast<int>(cfg.sensors.size());
  const int trials = cfg.trials;
  if (trials < 1) throw ContractError("run_experiment: needs at least one trial");

  ExperimentResult result;
  result.scenario_name = cfg.name;
  result.seed = cfg.seed;
  result.horizon = cfg.horizon;
  result.trials = trials;
  result.notes = cfg.notes;
  result.filters.resize(cfg.filters.size());
  for (std::size_t f = 0; f < cfg.filters.size(); ++f) {
    auto& m = result.filters[f];
    m.filter = cfg.filters[f];
    m.horizon = cfg.horizon;
    m.trials = trials;
    m.sensor_count = sensor_count;
    m.state_dim = n;
    m.errors.assign(static_cast<std::size_t>(trials) * k_count * sensor_count * n, 0.0);
    m.per_trial_mse.assign(static_cast<std::size_t>(trials) * k_count, 0.0);
    m.covariances.assign(static_cast<std::size_t>(k_count) * sensor_count, Matrix());
    if (cfg.dump_state) {
      m.trial0_states.assign(static_cast<std::size_t>(k_count) * sensor_count * n, 0.0);
    }
  }

  std::mutex failure_mutex;
  std::exception_ptr failure;

  auto run_trial = [&](int trial) {
    TrajectoryRecord record;
    try {
      record = simulate(cfg.model, cfg.sensors, cfg.p0, cfg.horizon, cfg.seed, trial);
    } catch (const Error& e) {
      throw NumericalError("trial " + std::to_string(trial) + ": " + e.what());
    }
    std::vector<Vector> ys(sensor_count);
    for (std::size_t f = 0; f < cfg.filters.size(); ++f) {
      auto& metrics = result.filters[f];
      auto filter = detail::make_filter(cfg.filters[f], cfg);
      const bool capture = trial == 0;
      for (int k = 0; k <= cfg.horizon; ++k) {
        if (k > 0) {
          for (int i = 0; i < sensor_count; ++i) ys[i] = record.measurements[i][k];
          try {
            filter->step(k, ys);
          } catch (const Error& e) {
            throw NumericalError("filter " + cfg.filters[f] + ", trial " +
                                 std::to_string(trial) + ", step " + std::to_string(k) +
                                 ": " + e.what());
          }
        }
        double sq_sum = 0.0;
        for (int i = 0; i < sensor_count; ++i) {
          const NodeEstimate& node = filter->node(i);
          if (k > 0 && (!node.state.allFinite() || !node.covariance.allFinite())) {
            throw NumericalError("filter " + cfg.filters[f] + ", trial " +
                                 std::to_string(trial) + ", step " + std::to_string(k) +
                                 ", sensor " + std::to_string(i + 1) +
                                 ": estimate diverged to non-finite values");
          }
          const Vector err = (k == 0 ? Vector(-record.states[0])
                                     : Vector(node.state - record.states[k]));
          sq_sum += err.squaredNorm();
          const std::size_t at =
              ((static_cast<std::size_t>(trial) * k_count + k) * sensor_count + i) * n;
          for (int c = 0; c < n; ++c) metrics.errors[at + c] = err(c);
          if (capture) {
            metrics.covariances[static_cast<std::size_t>(k) * sensor_count + i] =
                k == 0 ? cfg.initial_covariance() : node.covariance;
            if (cfg.dump_state) {
              const std::size_t sat = (static_cast<std::size_t>(k) * sensor_count + i) * n;
              for (int c = 0; c < n; ++c) {
                metrics.trial0_states[sat + c] = k == 0 ? 0.0 : node.state(c);
              }
            }
          }
        }
        metrics.per_trial_mse[static_cast<std::size_t>(trial) * k_count + k] =
            sq_sum / sensor_count;
        if (capture && k > 0 && opt.verbose_weights) {
          if (const auto* dist = filter->distributed()) {
            for (const auto& diag : dist->last_diagnostics()) {
              WeightLogRow row;
              row.k = k;
              row.sensor = diag.sensor;
              row.feasible = diag.feasible;
              row.iterations = diag.iterations;
              row.weights.assign(diag.weights.data(),
                                 diag.weights.data() + diag.weights.size());
              metrics.weight_log.push_back(std::move(row));
            }
          }
        }
      }
      if (capture) {
        if (const auto* dist = filter->distributed()) {
          metrics.fallback_count = dist->fallback_count();
        }
      }
    }
  };

  std::atomic<int> next_trial{0};
  auto worker = [&] {
    while (true) {
      const int trial = next_trial.fetch_add(1);
      if (trial >= trials) break;
      try {
        run_trial(trial);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        break;
      }
    }
  };

  int thread_count = opt.threads > 0
                         ? opt.threads
                         : static_cast<int>(std::thread::hardware_concurrency());
  thread_count = std::max(1, std::min(thread_count, trials));
  if (thread_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Deterministic reduction, in trial order.
  for (auto& metrics : result.filters) {
    metrics.mse.assign(k_count, 0.0);
    metrics.mse_se.assign(k_count, 0.0);
    metrics.trace_sum.assign(k_count, 0.0);
    for (int k = 0; k < k_count; ++k) {
      double mean = 0.0;
      for (int t = 0; t < trials; ++t) mean += metrics.trial_mse(t, k);
      mean /= trials;
      double var = 0.0;
      for (int t = 0; t < trials; ++t) {
        const double d = metrics.trial_mse(t, k) - mean;
        var += d * d;
      }
      var = trials > 1 ? var / (trials - 1) : 0.0;
      metrics.mse[k] = mean;
      metrics.mse_se[k] = std::sqrt(var / trials);
      double trace = 0.0;
      for (int i = 0; i < sensor_count; ++i) trace += metrics.covariance(k, i).trace();
      metrics.trace_sum[k] = trace;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Statistical reports.

struct ConsistencyRow {
  int k = 0;
  int sensor = 0;     // 1-based
  double min_eig = 0.0;  // of P - sample error covariance
  double band = 0.0;     // 3 bootstrap standard errors
  bool pass = false;
};

/// Check the filter's covariance against the sampled error covariance for
/// every (step, sensor). The sample covariance uses the known-zero error
/// mean; bands come from a trial-level bootstrap of the min-eig statistic.
inline std::vector<ConsistencyRow> consistency_report(const FilterRunMetrics& metrics,
                                                      std::uint64_t seed,
                                                      int resamples = 200) {
  const int trials = metrics.trials;
  if (trials < 100) {
    throw ContractError("consistency_report: needs at least 100 trials");
  }
  const int n = metrics.state_dim;
  const int k_count = metrics.horizon + 1;

  // Common bootstrap resample counts, one multiset of trials per replicate.
  GaussianStream boot_stream(derive_stream_seed(seed, 0, StreamKind::Bootstrap));
  std::vector<std::vector<int>> counts(resamples, std::vector<int>(trials, 0));
  for (int b = 0; b < resamples; ++b) {
    for (int t = 0; t < trials; ++t) {
      ++counts[b][static_cast<int>(boot_stream.uniform_index(trials))];
    }
  }

  std::vector<ConsistencyRow> rows;
  rows.reserve(static_cast<std::size_t>(k_count) * metrics.sensor_count);
  // Per-trial outer products kept as flat upper-triangle buffers so the
  // bootstrap loop is pure array arithmetic.
  const int pairs = n * (n + 1) / 2;
  std::vector<double> outers(static_cast<std::size_t>(trials) * pairs);
  std::vector<double> accum(pairs);
  Matrix sample(n, n);
  for (int k = 0; k < k_count; ++k) {
    for (int i = 0; i < metrics.sensor_count; ++i) {
      std::fill(accum.begin(), accum.end(), 0.0);
      for (int t = 0; t < trials; ++t) {
        const auto e = metrics.error(t, k, i);
        double* slot = outers.data() + static_cast<std::size_t>(t) * pairs;
        int at = 0;
        for (int r = 0; r < n; ++r) {
          for (int c = r; c < n; ++c, ++at) {
            slot[at] = e(r) * e(c);
            accum[at] += slot[at];
          }
        }
      }
      const Matrix& p = metrics.covariance(k, i);
      auto stat_from = [&](const std::vector<double>& sums) {
        int at = 0;
        for (int r = 0; r < n; ++r) {
          for (int c = r; c < n; ++c, ++at) {
            sample(r, c) = sums[at] / trials;
            sample(c, r) = sample(r, c);
          }
        }
        return min_eigenvalue(p - sample);
      };
      const double stat = stat_from(accum);

      double mean_b = 0.0, sq_b = 0.0;
      std::vector<double> boot(pairs);
      for (int b = 0; b < resamples; ++b) {
        std::fill(boot.begin(), boot.end(), 0.0);
        const int* count = counts[b].data();
        for (int t = 0; t < trials; ++t) {
          if (count[t] == 0) continue;
          const double weight = count[t];
          const double* slot = outers.data() + static_cast<std::size_t>(t) * pairs;
          for (int at = 0; at < pairs; ++at) boot[at] += weight * slot[at];
        }
        const double stat_b = stat_from(boot);
        mean_b += stat_b;
        sq_b += stat_b * stat_b;
      }
      mean_b /= resamples;
      const double var_b = std::max(0.0, sq_b / resamples - mean_b * mean_b);
      ConsistencyRow row;
      row.k = k;
      row.sensor = i + 1;
      row.min_eig = stat;
      row.band = 3.0 * std::sqrt(var_b);
      row.pass = stat >= -row.band;
      rows.push_back(row);
    }
  }
  return rows;
}

struct MomentCheck {
  int component = 0;
  double mean = 0.0;
  double mean_band = 0.0;  // 3 * sd / sqrt(T)
  double skewness = 0.0;
  double skew_band = 0.0;  // 3 * sqrt(6/T)
  double excess_kurtosis = 0.0;
  double kurtosis_band = 0.0;  // 3 * sqrt(24/T)
  bool pass = false;
};

/// Moment-based normality and zero-mean checks, one row per component.
inline std::vector<MomentCheck> gaussianity_check(const Matrix& samples) {
  const long trials = samples.rows();
  if (trials < 200) throw ContractError("gaussianity_check: needs at least 200 samples");
  std::vector<MomentCheck> checks;
  for (long c = 0; c < samples.cols(); ++c) {
    const Vector x = samples.col(c);
    const double mean = x.mean();
    const Vector centered = x.array() - mean;
    const double m2 = centered.squaredNorm() / trials;
    const double m3 = centered.array().pow(3).sum() / trials;
    const double m4 = centered.array().pow(4).sum() / trials;
    MomentCheck check;
    check.component = static_cast<int>(c);
    check.mean = mean;
    check.mean_band = 3.0 * std::sqrt(m2 / trials);
    check.skewness = m3 / std::pow(m2, 1.5);
    check.skew_band = 3.0 * std::sqrt(6.0 / trials);
    check.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    check.kurtosis_band = 3.0 * std::sqrt(24.0 / trials);
    check.pass = std::abs(check.mean) <= check.mean_band &&
                 std::abs(check.skewness) <= check.skew_band &&
                 std::abs(check.excess_kurtosis) <= check.kurtosis_band;
    checks.push_back(check);
  }
  return checks;
}

/// Error samples at a fixed (step, sensor) as a trials x state_dim matrix.
inline Matrix error_samples(const FilterRunMetrics& metrics, int k, int sensor) {
  Matrix samples(metrics.trials, metrics.state_dim);
  for (int t = 0; t < metrics.trials; ++t) {
    samples.row(t) = metrics.error(t, k, sensor).transpose();
  }
  return samples;
}

struct DominanceRow {
  int k = 0;
  int sensor = 0;  // 1-based
  double min_eig = 0.0;  // of P_constant - P_adaptive
};

/// Per-(step, sensor) margin by which the constant-weight covariance bound
/// dominates the adaptive one. Nonnegative everywhere is the expectation.
inline std::vector<DominanceRow> dominance_trace(const FilterRunMetrics& constant,
                                                 const FilterRunMetrics& adaptive) {
  std::vector<DominanceRow> rows;
  for (int k = 0; k <= constant.horizon; ++k) {
    for (int i = 0; i < constant.sensor_count; ++i) {
      rows.push_back(
          {k, i + 1,
           fused_order_margin(adaptive.covariance(k, i), constant.covariance(k, i))});
    }
  }
  return rows;
}

inline int steady_state_start(int horizon, double fraction = 0.25) {
  return horizon - static_cast<int>(std::floor(horizon * fraction));
}

/// Mean of the trial-averaged MSE over the steady-state window.
inline double steady_state_mse(const FilterRunMetrics& metrics, double fraction = 0.25) {
  const int k0 = steady_state_start(metrics.horizon, fraction);
  double sum = 0.0;
  int count = 0;
  for (int k = k0; k <= metrics.horizon; ++k, ++count) sum += metrics.mse[k];
  return sum / count;
}

struct PairedGap {
  double mean = 0.0;  // mean over trials of (first - second) steady-state MSE
  double se = 0.0;
};

/// Paired per-trial steady-state MSE gap between two filters run on common
/// random numbers.
inline PairedGap paired_steady_gap(const FilterRunMetrics& first,
                                   const FilterRunMetrics& second,
                                   double fraction = 0.25) {
  if (first.trials != second.trials || first.horizon != second.horizon) {
    throw ContractError("paired_steady_gap: runs are not comparable");
  }
  const int k0 = steady_state_start(first.horizon, fraction);
  const int trials = first.trials;
  std::vector<double> gaps(trials, 0.0);
  for (int t = 0; t < trials; ++t) {
    double a = 0.0, b = 0.0;
    int count = 0;
    for (int k = k0; k <= first.horizon; ++k, ++count) {
      a += first.trial_mse(t, k);
      b += second.trial_mse(t, k);
    }
    gaps[t] = (a - b) / count;
  }
  double mean = 0.0;
  for (const double g : gaps) mean += g;
  mean /= trials;
  double var = 0.0;
  for (const double g : gaps) var += (g - mean) * (g - mean);
  var = trials > 1 ? var / (trials - 1) : 0.0;
  return {mean, std::sqrt(var / trials)};
}

// ---------------------------------------------------------------------------
// In-run checks and artifact emission.

struct RunCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// The checks a finished run can evaluate on itself given its filters and
/// trial count. These feed summary.json and the CLI exit code.
inline std::vector<RunCheck> run_checks(const ExperimentResult& result,
                                        const RunOptions& opt = {}) {
  std::vector<RunCheck> checks;
  const auto* adaptive = result.find("cdkf-adaptive");
  const auto* constant = result.find("cdkf-constant");

  const FilterRunMetrics* consistency_target =
      adaptive != nullptr ? adaptive : constant;
  if (consistency_target != nullptr && result.trials >= 100) {
    const auto rows =
        consistency_report(*consistency_target, result.seed, opt.bootstrap_resamples);
    int failures = 0;
    double worst = 0.0;
    for (const auto& row : rows) {
      if (!row.pass) {
        ++failures;
        worst = std::min(worst, row.min_eig + row.band);
      }
    }
    checks.push_back({"consistency", failures == 0,
                      failures == 0
                          ? "all (k, sensor) pairs within the bootstrap band"
                          : std::to_string(failures) + " pairs below the band"});
  }

  if (adaptive != nullptr && constant != nullptr) {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& row : dominance_trace(*constant, *adaptive)) {
      worst = std::min(worst, row.min_eig);
    }
    checks.push_back({"dominance", worst >= -1e-9,
                      "min eigenvalue of (P_constant - P_adaptive) across the run: " +
                          detail::format_number(worst)});
  }

  for (const FilterRunMetrics* m : {constant, adaptive}) {
    if (m == nullptr) continue;
    bool ok = true;
    for (int k = 0; k <= m->horizon && ok; ++k) {
      ok = m->trace_sum[k] >= m->mse[k] - 3.0 * m->mse_se[k];
    }
    checks.push_back({"mse_within_bound[" + m->filter + "]", ok,
                      ok ? "network MSE stays below the covariance-trace bound"
                         : "network MSE escapes the covariance-trace bound"});
  }

  // Steady-state ordering along the canonical chain, adjacent pairs, paired
  // trials, 2-SE slack.
  std::vector<const FilterRunMetrics*> chain;
  for (const auto& name : known_filter_names()) {
    if (const auto* m = result.find(name)) chain.push_back(m);
  }
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    const PairedGap gap = paired_steady_gap(*chain[i + 1], *chain[i], opt.steady_fraction);
    const bool ok = gap.mean >= -2.0 * gap.se;
    checks.push_back({"ordering[" + chain[i]->filter + "<=" + chain[i + 1]->filter + "]",
                      ok,
                      "steady-state paired gap " + detail::format_number(gap.mean) +
                          " (se " + detail::format_number(gap.se) + ")"});
  }
  return checks;
}

inline void write_mse_csv(const std::string& path, const ExperimentResult& result) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "k,filter,mse,se\n";
  for (const auto& metrics : result.filters) {
    for (int k = 0; k <= metrics.horizon; ++k) {
      out << k << ',' << metrics.filter << ',' << detail::format_number(metrics.mse[k])
          << ',' << detail::format_number(metrics.mse_se[k]) << '\n';
    }
  }
}

inline void write_consistency_csv(const std::string& path,
                                  const std::vector<ConsistencyRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "k,sensor,min_eig,band\n";
  for (const auto& row : rows) {
    out << row.k << ',' << row.sensor << ',' << detail::format_number(row.min_eig) << ','
        << detail::format_number(row.band) << '\n';
  }
}

inline void write_dominance_csv(const std::string& path,
                                const std::vector<DominanceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "k,sensor,min_eig\n";
  for (const auto& row : rows) {
    out << row.k << ',' << row.sensor << ',' << detail::format_number(row.min_eig)
        << '\n';
  }
}

inline void write_weights_csv(const std::string& path, const FilterRunMetrics& metrics) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "k,sensor,feasible,iterations,weights\n";
  for (const auto& row : metrics.weight_log) {
    out << row.k << ',' << row.sensor << ',' << (row.feasible ? 1 : 0) << ','
        << row.iterations << ',';
    for (std::size_t i = 0; i < row.weights.size(); ++i) {
      if (i) out << ';';
      out << detail::format_number(row.weights[i]);
    }
    out << '\n';
  }
}

inline void write_state_dump_csv(const std::string& path,
                                 const FilterRunMetrics& metrics) {
  if (metrics.trial0_states.empty()) {
    throw ContractError("write_state_dump_csv: run was made without dump_state");
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "k,sensor";
  for (int c = 0; c < metrics.state_dim; ++c) out << ",x" << c;
  out << ",trace_p,min_eig_p\n";
  for (int k = 0; k <= metrics.horizon; ++k) {
    for (int i = 0; i < metrics.sensor_count; ++i) {
      out << k << ',' << i + 1;
      const std::size_t at =
          (static_cast<std::size_t>(k) * metrics.sensor_count + i) * metrics.state_dim;
      for (int c = 0; c < metrics.state_dim; ++c) {
        out << ',' << detail::format_number(metrics.trial0_states[at + c]);
      }
      const Matrix& p = metrics.covariance(k, i);
      out << ',' << detail::format_number(p.trace()) << ','
          << detail::format_number(min_eigenvalue(p)) << '\n';
    }
  }
}

inline Json run_summary(const ExperimentResult& result,
                        const std::vector<RunCheck>& checks,
                        const RunOptions& opt = {}) {
  Json summary;
  summary["scenario"] = result.scenario_name;
  summary["seed"] = result.seed;
  summary["trials"] = result.trials;
  summary["horizon"] = result.horizon;
  if (!result.notes.empty()) summary["notes"] = result.notes;
  Json filters = Json::array();
  for (const auto& metrics : result.filters) {
    Json f;
    f["name"] = metrics.filter;
    f["steady_state_mse"] = steady_state_mse(metrics, opt.steady_fraction);
    f["final_trace_sum"] = metrics.trace_sum.back();
    if (metrics.filter.rfind("cdkf", 0) == 0) {
      f["fallbacks"] = metrics.fallback_count;
    }
    filters.push_back(f);
  }
  summary["filters"] = filters;
  Json check_list = Json::array();
  bool all = true;
  for (const auto& check : checks) {
    Json c;
    c["name"] = check.name;
    c["pass"] = check.pass;
    c["detail"] = check.detail;
    check_list.push_back(c);
    all = all && check.pass;
  }
  summary["checks"] = check_list;
  summary["all_checks_pass"] = all;
  summary["jitter_events"] = jitter_event_count().load();
  return summary;
}

}  // namespace dkf
