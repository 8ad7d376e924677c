// Acceptance suite: one test per criterion, each printing a pass/fail line.
// The 500-trial scenario runs are shared across criteria through lazy
// singletons, always on common random numbers.

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <random>

#include "dkf/harness.hpp"
#include "dkf/observability.hpp"
#include "dkf/scenario.hpp"

namespace {

using dkf::Matrix;
using dkf::Vector;

void report(int criterion, const std::string& name, bool pass) {
  std::cout << "[criterion " << criterion << "] " << name << ": "
            << (pass ? "PASS" : "FAIL") << std::endl;
}

struct TimedRun {
  dkf::ExperimentResult result;
  double seconds = 0.0;
};

const TimedRun& example1_run() {
  static const TimedRun run = [] {
    TimedRun timed;
    const auto cfg = dkf::make_paper_example_1(100, 500, 2025);
    const auto start = std::chrono::steady_clock::now();
    timed.result = dkf::run_experiment(cfg);
    timed.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return timed;
  }();
  return run;
}

const dkf::ExperimentResult& example2_run() {
  static const dkf::ExperimentResult result = [] {
    const auto cfg = dkf::make_paper_example_2(100, 500, 2025);
    return dkf::run_experiment(cfg);
  }();
  return result;
}

TEST(Acceptance, Criterion1ConsistencyUnderMonteCarlo) {
  const TimedRun& run = example1_run();
  bool pass = run.seconds < 120.0;
  EXPECT_LT(run.seconds, 120.0) << "scenario run took " << run.seconds << "s";
  for (const char* name : {"cdkf-adaptive", "cdkf-constant"}) {
    const auto* metrics = run.result.find(name);
    ASSERT_NE(metrics, nullptr);
    const auto rows = dkf::consistency_report(*metrics, run.result.seed);
    int failures = 0;
    for (const auto& row : rows) failures += row.pass ? 0 : 1;
    EXPECT_EQ(failures, 0) << name << ": " << failures << " of " << rows.size()
                           << " (k, sensor) pairs below the band";
    pass = pass && failures == 0;
  }
  report(1, "consistency of (x, P) over 500 trials", pass);
}

TEST(Acceptance, Criterion2AdaptiveBoundDominatesDeterministically) {
  const auto& result = example1_run().result;
  const auto rows = dkf::dominance_trace(*result.find("cdkf-constant"),
                                         *result.find("cdkf-adaptive"));
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& row : rows) worst = std::min(worst, row.min_eig);
  EXPECT_GE(worst, -1e-9);
  report(2, "adaptive covariance bound dominates constant (worst margin " +
                dkf::detail::format_number(worst) + ")",
         worst >= -1e-9);
}

TEST(Acceptance, Criterion3BoundedCovarianceUnderSingularDynamics) {
  auto cfg = dkf::make_paper_example_1(1000, 1, 2025);
  cfg.filters = {"cdkf-adaptive", "cdkf-constant"};
  const auto result = dkf::run_experiment(cfg);

  bool pass = true;
  for (const auto& metrics : result.filters) {
    for (int i = 0; i < metrics.sensor_count; ++i) {
      double mid_max = 0.0, last_max = 0.0;
      for (int k = 0; k <= 1000; ++k) {
        const double trace = metrics.covariance(k, i).trace();
        const bool finite = std::isfinite(trace);
        EXPECT_TRUE(finite) << metrics.filter << " sensor " << i + 1 << " k " << k;
        pass = pass && finite;
        if (k > 250 && k <= 750) mid_max = std::max(mid_max, trace);
        if (k > 750) last_max = std::max(last_max, trace);
      }
      EXPECT_LE(last_max, 1.05 * mid_max)
          << metrics.filter << " sensor " << i + 1 << ": last-quartile max "
          << last_max << " vs middle-quartile max " << mid_max;
      pass = pass && last_max <= 1.05 * mid_max;
    }
  }

  const auto report_validation = dkf::validate_assumptions(
      cfg.model, cfg.sensors, cfg.window ? &*cfg.window : nullptr);
  std::vector<int> expected;
  for (int k = 0; k < 1000; ++k) {
    if (k % 12 == 1 || k % 12 == 5) expected.push_back(k);
  }
  EXPECT_EQ(report_validation.singular_steps, expected);
  pass = pass && report_validation.singular_steps == expected;
  report(3, "covariance bounded over 1000 steps despite singular dynamics", pass);
}

// Textbook Kalman recursion, explicit inverses, independent of the library.
struct ReferenceKf {
  Vector x;
  Matrix p;
  void step(const Matrix& a, const Matrix& q, const Matrix& h, const Matrix& r,
            const Vector& y) {
    x = a * x;
    p = a * p * a.transpose() + q;
    const Matrix s = h * p * h.transpose() + r;
    const Matrix k = p * h.transpose() * s.inverse();
    x = x + k * (y - h * x);
    p = p - k * h * p;
  }
};

TEST(Acceptance, Criterion4SingleNodeReducesToTextbookKalman) {
  dkf::ScenarioConfig cfg;
  cfg.name = "reduction";
  cfg.horizon = 50;
  cfg.trials = 1;
  cfg.seed = 77;
  cfg.model.state_dim = 2;
  cfg.model.horizon = 50;
  Matrix a(2, 2);
  a << 1.0, 0.05, 0.0, 1.0;
  cfg.model.A = [a](int) { return a; };
  cfg.model.Q = [](int) { return Matrix::Identity(2, 2); };
  dkf::SensorModel sensor;
  sensor.sensor_id = 1;
  sensor.meas_dim = 2;
  sensor.H = [](int) { return Matrix::Identity(2, 2); };
  sensor.R = [](int) { return Matrix::Identity(2, 2); };
  cfg.sensors = {sensor};
  cfg.topology = dkf::uniform_weights({}, 1);
  cfg.p0 = Matrix::Identity(2, 2);

  const auto record = dkf::simulate(cfg.model, cfg.sensors, cfg.p0, 50, cfg.seed);
  dkf::CentralizedFilter ckf(cfg.model, cfg.sensors, cfg.p0);
  dkf::NetworkedOptimalFilter table1(cfg.model, cfg.sensors, cfg.topology, cfg.p0);
  dkf::ConsistentDistributedFilter cdkf_c(cfg.model, cfg.sensors, cfg.topology,
                                          dkf::WeightStrategy::constant(), cfg.p0);
  dkf::ConsistentDistributedFilter cdkf_a(cfg.model, cfg.sensors, cfg.topology,
                                          dkf::WeightStrategy::adaptive(), cfg.p0);
  ReferenceKf ref{Vector::Zero(2), cfg.p0};

  double worst = 0.0;
  for (int k = 1; k <= 50; ++k) {
    const std::vector<Vector> ys = {record.measurements[0][k]};
    ckf.step(k, ys);
    table1.step(k, ys);
    cdkf_c.step(k, ys);
    cdkf_a.step(k, ys);
    ref.step(a, cfg.model.process_noise(0), cfg.sensors[0].observation(0),
             cfg.sensors[0].noise(0), ys[0]);
    for (const dkf::NodeEstimate* est :
         {&ckf.estimate(), &table1.estimates()[0], &cdkf_c.estimates()[0],
          &cdkf_a.estimates()[0]}) {
      worst = std::max(worst, (est->state - ref.x).norm());
      worst = std::max(worst, (est->covariance - ref.p).norm());
    }
  }
  EXPECT_LT(worst, 1e-10);
  report(4, "all filters match the reference Kalman filter at N = 1 (max dev " +
                dkf::detail::format_number(worst) + ")",
         worst < 1e-10);
}

TEST(Acceptance, Criterion5WeightSolverMatchesBruteForce) {
  std::mt19937_64 rng(52025);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_spd = [&](int n) {
    Matrix g(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) g(r, c) = gauss(rng);
    const double scale = std::pow(10.0, gauss(rng) * 0.5);
    return Matrix((g * g.transpose() + 0.05 * Matrix::Identity(n, n)) * scale);
  };
  auto dirichlet = [&](long m) {
    Vector g(m);
    double total = 0.0;
    for (long i = 0; i < m; ++i) {
      std::uniform_real_distribution<double> uniform(1e-12, 1.0);
      g(i) = -std::log(uniform(rng));
      total += g(i);
    }
    return Vector(g / total);
  };

  int fallbacks = 0;
  int certified_beyond_scan = 0;
  bool pass = true;
  for (int instance = 0; instance < 200; ++instance) {
    const int n = 1 + static_cast<int>(rng() % 4);
    const int m = 1 + static_cast<int>(rng() % 5);
    std::vector<Matrix> info;
    for (int j = 0; j < m; ++j) info.push_back(random_spd(n));
    const Vector a = dirichlet(m);

    const auto sol = dkf::solve_adaptive_weights(a, info);

    // Brute-force oracle: simplex vertices plus 1000 Dirichlet samples.
    bool oracle_feasible = false;
    double oracle_best = std::numeric_limits<double>::infinity();
    auto scan = [&](const Vector& w) {
      const auto d = dkf::weight_delta(w, a, info);
      if (!d.feasible) return;
      oracle_feasible = true;
      oracle_best = std::min(oracle_best, d.delta.inverse().trace());
    };
    for (int j = 0; j < m; ++j) {
      Vector vertex = Vector::Zero(m);
      vertex(j) = 1.0;
      scan(vertex);
    }
    for (int p = 0; p < 1000; ++p) scan(dirichlet(m));

    if (sol.fallback) {
      // Fallback while the scan can exhibit a feasible point would be a
      // false negative.
      EXPECT_FALSE(oracle_feasible) << "instance " << instance;
      pass = pass && !oracle_feasible;
      ++fallbacks;
      continue;
    }
    // Returned weights must certify feasibility themselves; that certificate
    // outranks the sampling scan when the feasible set is too small to hit.
    const double sum_residual = std::abs(sol.weights.sum() - 1.0);
    const double neg_residual = std::max(0.0, -sol.weights.minCoeff());
    const bool point_feasible = dkf::weight_delta(sol.weights, a, info).feasible;
    EXPECT_LE(sum_residual, 1e-10) << "instance " << instance;
    EXPECT_LE(neg_residual, 1e-10) << "instance " << instance;
    EXPECT_TRUE(point_feasible) << "instance " << instance;
    EXPECT_TRUE(sol.certificate_ok) << "instance " << instance;
    pass = pass && sum_residual <= 1e-10 && neg_residual <= 1e-10 &&
           point_feasible && sol.certificate_ok;
    if (oracle_feasible) {
      EXPECT_LE(sol.objective, oracle_best * 1.01) << "instance " << instance;
      pass = pass && sol.objective <= oracle_best * 1.01;
    } else {
      ++certified_beyond_scan;
    }
  }
  report(5, "adaptive weights within 1% of brute force on 200 instances (" +
                std::to_string(fallbacks) + " infeasible, " +
                std::to_string(certified_beyond_scan) + " certified beyond the scan)",
         pass);
}

TEST(Acceptance, Criterion6AdaptiveWeightsImproveMse) {
  const auto& result = example1_run().result;
  const auto gap = dkf::paired_steady_gap(*result.find("cdkf-constant"),
                                          *result.find("cdkf-adaptive"));
  EXPECT_GE(gap.mean, -2.0 * gap.se)
      << "steady-state constant-minus-adaptive gap " << gap.mean << " (se " << gap.se
      << ")";
  report(6, "adaptive weights lower steady-state MSE (gap " +
                dkf::detail::format_number(gap.mean) + ", se " +
                dkf::detail::format_number(gap.se) + ")",
         gap.mean >= -2.0 * gap.se);
}

TEST(Acceptance, Criterion7FilterOrderingBothScenarios) {
  bool pass = true;
  for (const dkf::ExperimentResult* result :
       {&example1_run().result, &example2_run()}) {
    std::vector<const dkf::FilterRunMetrics*> chain;
    for (const auto& name : dkf::known_filter_names()) {
      const auto* m = result->find(name);
      ASSERT_NE(m, nullptr);
      chain.push_back(m);
    }
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      const auto gap = dkf::paired_steady_gap(*chain[i + 1], *chain[i]);
      const bool ok = gap.mean >= -2.0 * gap.se;
      EXPECT_TRUE(ok) << result->scenario_name << ": " << chain[i]->filter
                      << " <= " << chain[i + 1]->filter << " violated, gap "
                      << gap.mean << " se " << gap.se;
      pass = pass && ok;
    }
  }
  report(7, "steady-state MSE ordering ckf <= table1 <= adaptive <= constant", pass);
}

TEST(Acceptance, Criterion8ErrorsZeroMeanGaussian) {
  const auto& result = example1_run().result;
  const auto* metrics = result.find("cdkf-adaptive");
  bool pass = true;
  for (int i = 0; i < metrics->sensor_count; ++i) {
    const auto checks = dkf::gaussianity_check(dkf::error_samples(*metrics, 50, i));
    for (const auto& check : checks) {
      EXPECT_TRUE(check.pass) << "sensor " << i + 1 << " component "
                              << check.component << ": mean " << check.mean
                              << ", skew " << check.skewness << ", kurtosis "
                              << check.excess_kurtosis;
      pass = pass && check.pass;
    }
  }

  // Negative control: uniform noise must trip the kurtosis band.
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Matrix bogus(2000, 1);
  for (int t = 0; t < 2000; ++t) bogus(t, 0) = uniform(rng);
  const bool control_fails = !dkf::gaussianity_check(bogus)[0].pass;
  EXPECT_TRUE(control_fails);
  pass = pass && control_fails;
  report(8, "estimation errors zero-mean Gaussian at k = 50 (controls fail)", pass);
}

TEST(Acceptance, Criterion9StrongConnectivityImpliesPositivePower) {
  std::mt19937_64 rng(92025);
  bool pass = true;
  for (int instance = 0; instance < 200; ++instance) {
    const int n = 2 + static_cast<int>(rng() % 11);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace_back(order[(i + 1) % n], order[i]);
    const int extras = static_cast<int>(rng() % (2 * n + 1));
    for (int e = 0; e < extras; ++e) {
      edges.emplace_back(static_cast<int>(rng() % n), static_cast<int>(rng() % n));
    }
    const auto topo = dkf::uniform_weights(edges, n);
    ASSERT_TRUE(dkf::is_strongly_connected(topo));
    const bool primitive = dkf::check_primitivity(topo, n - 1);
    EXPECT_TRUE(primitive) << "instance " << instance << " n " << n;
    pass = pass && primitive;
  }
  report(9, "adjacency power N-1 strictly positive on 200 random digraphs", pass);
}

TEST(Acceptance, Criterion10InformationIdentityFuzz) {
  std::mt19937_64 rng(102025);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst = 0.0;
  for (int instance = 0; instance < 1000; ++instance) {
    const int n = 1 + static_cast<int>(rng() % 5);
    const int m = 1 + static_cast<int>(rng() % 3);
    Matrix g(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) g(r, c) = gauss(rng);
    const Matrix p_bar = g * g.transpose() + 0.1 * Matrix::Identity(n, n);
    Matrix h(m, n);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) h(r, c) = gauss(rng);
    Matrix gr(m, m);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) gr(r, c) = gauss(rng);
    const Matrix r_cov = gr * gr.transpose() + 0.1 * Matrix::Identity(m, m);

    dkf::PredictedEstimate pred{Vector::Zero(n), p_bar};
    const auto upd = dkf::update(pred, Vector::Zero(m), h, r_cov);
    const Matrix lhs = upd.covariance.inverse();
    const Matrix rhs = p_bar.inverse() + h.transpose() * r_cov.inverse() * h;
    worst = std::max(worst, (lhs - rhs).norm() / rhs.norm());
  }
  EXPECT_LE(worst, 1e-8);
  report(10, "information identity residual <= 1e-8 over 1000 updates (worst " +
                 dkf::detail::format_number(worst) + ")",
         worst <= 1e-8);
}

}  // namespace
