#include "dkf/observability.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dkf/scenario.hpp"

namespace {

using dkf::Matrix;

dkf::SystemModel scalar_model(double a, int horizon) {
  dkf::SystemModel model;
  model.state_dim = 1;
  model.horizon = horizon;
  model.A = [a](int) { return Matrix::Constant(1, 1, a); };
  model.Q = [](int) { return Matrix::Identity(1, 1); };
  return model;
}

dkf::SensorModel scalar_sensor(int id, double h, double r) {
  dkf::SensorModel s;
  s.sensor_id = id;
  s.meas_dim = 1;
  s.H = [h](int) { return Matrix::Constant(1, 1, h); };
  s.R = [r](int) { return Matrix::Constant(1, 1, r); };
  return s;
}

TEST(Transition, IdentityAtEqualIndices) {
  auto cfg = dkf::make_paper_example_1(20, 1, 1);
  EXPECT_TRUE(dkf::transition(cfg.model, 7, 7).isIdentity(0.0));
}

TEST(Transition, ConstantDynamicsCubed) {
  Matrix a(2, 2);
  a << 1.0, 0.3, 0.0, 0.9;
  dkf::SystemModel model;
  model.state_dim = 2;
  model.horizon = 10;
  model.A = [a](int) { return a; };
  model.Q = [](int) { return Matrix::Identity(2, 2); };
  EXPECT_LT((dkf::transition(model, 3, 0) - a * a * a).norm(), 1e-14);
}

TEST(Transition, MatchesDirectProduct) {
  auto cfg = dkf::make_paper_example_1(20, 1, 1);
  const Matrix direct = cfg.model.dynamics(1) * cfg.model.dynamics(0);
  EXPECT_LT((dkf::transition(cfg.model, 2, 0) - direct).norm(), 1e-14);
}

TEST(Transition, ReversedIndicesThrow) {
  auto cfg = dkf::make_paper_example_1(20, 1, 1);
  EXPECT_THROW(dkf::transition(cfg.model, 2, 5), dkf::DimensionError);
}

TEST(StackObservations, PaperExampleOneAtZero) {
  auto cfg = dkf::make_paper_example_1(20, 1, 1);
  const auto [h, r] = dkf::stack_observations(cfg.sensors, 0);
  ASSERT_EQ(h.rows(), 4);
  ASSERT_EQ(h.cols(), 2);
  Matrix expected_h(4, 2);
  expected_h << 1, 0, 0, 0, -1, 2, 0, 0;
  EXPECT_LT((h - expected_h).norm(), 1e-14);
  Matrix expected_r = Matrix::Zero(4, 4);
  expected_r.diagonal() << 0.5, 0.6, 0.4, 0.3;
  EXPECT_LT((r - expected_r).norm(), 1e-14);
}

TEST(StackObservations, SingleSensorIsIdentityStack) {
  auto cfg = dkf::make_paper_example_1(20, 1, 1);
  const std::vector<dkf::SensorModel> one = {cfg.sensors[2]};
  const auto [h, r] = dkf::stack_observations(one, 4);
  EXPECT_LT((h - cfg.sensors[2].observation(4)).norm(), 1e-15);
  EXPECT_LT((r - cfg.sensors[2].noise(4)).norm(), 1e-15);
}

TEST(Gramian, ScalarSum) {
  const auto model = scalar_model(1.0, 10);
  const auto report =
      dkf::observability_gramian(model, {scalar_sensor(1, 1.0, 1.0)}, 0, 2);
  EXPECT_NEAR(report.gramian(0, 0), 3.0, 1e-14);
  EXPECT_NEAR(report.alpha_hat, 3.0, 1e-14);
  EXPECT_NEAR(report.beta_hat, 3.0, 1e-14);
}

TEST(Gramian, PaperExampleOneGloballyObservable) {
  auto cfg = dkf::make_paper_example_1(120, 1, 1);
  const auto report = dkf::observability_gramian(cfg.model, cfg.sensors, 0, 12);
  EXPECT_GT(report.alpha_hat, 0.0);
  EXPECT_GE(report.beta_hat, report.alpha_hat);
}

TEST(Gramian, AllZeroRowsGiveNothing) {
  auto cfg = dkf::make_paper_example_1(20, 1, 1);
  const std::vector<dkf::SensorModel> blind = {cfg.sensors[1], cfg.sensors[3]};
  const auto report = dkf::observability_gramian(cfg.model, blind, 0, 10);
  EXPECT_EQ(report.alpha_hat, 0.0);
  EXPECT_LT(report.gramian.norm(), 1e-30);
  const auto uco = dkf::check_uco(cfg.model, blind, 10, 0, 5);
  EXPECT_FALSE(uco.uniformly_observable);
}

TEST(Gramian, InvariantUnderSensorReordering) {
  auto cfg = dkf::make_paper_example_1(30, 1, 1);
  auto permuted = cfg.sensors;
  std::rotate(permuted.begin(), permuted.begin() + 2, permuted.end());
  const auto a = dkf::observability_gramian(cfg.model, cfg.sensors, 3, 9);
  const auto b = dkf::observability_gramian(cfg.model, permuted, 3, 9);
  EXPECT_LT((a.gramian - b.gramian).norm(), 1e-12);
}

TEST(Gramian, MonotoneInWindow) {
  auto cfg = dkf::make_paper_example_1(40, 1, 1);
  for (int window = 0; window < 12; ++window) {
    const auto small = dkf::observability_gramian(cfg.model, cfg.sensors, 2, window);
    const auto large = dkf::observability_gramian(cfg.model, cfg.sensors, 2, window + 1);
    EXPECT_GE(dkf::psd_order_margin(small.gramian, large.gramian), -1e-12);
  }
}

TEST(CheckUco, PaperExampleOneHolds) {
  auto cfg = dkf::make_paper_example_1(132, 1, 1);
  const auto report = dkf::check_uco(cfg.model, cfg.sensors, 12, 0, 120);
  EXPECT_TRUE(report.uniformly_observable);
  EXPECT_GT(report.min_alpha, 0.0);
}

TEST(CheckUco, EmptySweepIsNotVacuouslyObservable) {
  auto cfg = dkf::make_paper_example_1(10, 1, 1);
  // Window longer than the horizon leaves nothing to check.
  const auto report = dkf::check_uco(cfg.model, cfg.sensors, 20, 0, 5);
  EXPECT_EQ(report.windows_checked, 0);
  EXPECT_FALSE(report.uniformly_observable);
}

TEST(CheckUco, FullyObservingSensorAlphaIsWindowPlusOne) {
  dkf::SystemModel model;
  model.state_dim = 2;
  model.horizon = 20;
  model.A = [](int) { return Matrix::Identity(2, 2); };
  model.Q = [](int) { return Matrix::Identity(2, 2); };
  dkf::SensorModel sensor;
  sensor.sensor_id = 1;
  sensor.meas_dim = 2;
  sensor.H = [](int) { return Matrix::Identity(2, 2); };
  sensor.R = [](int) { return Matrix::Identity(2, 2); };
  const auto report = dkf::check_uco(model, {sensor}, 7, 0, 10);
  EXPECT_TRUE(report.uniformly_observable);
  EXPECT_NEAR(report.min_alpha, 8.0, 1e-12);
  EXPECT_NEAR(report.max_beta, 8.0, 1e-12);
}

TEST(StackObservations, MixedMeasurementDimensions) {
  dkf::SensorModel wide;
  wide.sensor_id = 1;
  wide.meas_dim = 2;
  wide.H = [](int) {
    Matrix h(2, 3);
    h << 1, 0, 0, 0, 1, 0;
    return h;
  };
  wide.R = [](int) { return Matrix(2.0 * Matrix::Identity(2, 2)); };
  dkf::SensorModel narrow = scalar_sensor(2, 1.0, 0.5);
  narrow.H = [](int) {
    Matrix h(1, 3);
    h << 0, 0, 1;
    return h;
  };
  const auto [h, r] = dkf::stack_observations({wide, narrow}, 0);
  ASSERT_EQ(h.rows(), 3);
  ASSERT_EQ(h.cols(), 3);
  ASSERT_EQ(r.rows(), 3);
  EXPECT_DOUBLE_EQ(r(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(r(2, 2), 0.5);
  EXPECT_DOUBLE_EQ(h(2, 2), 1.0);
}

TEST(ConjugatedGramian, PositiveDefiniteOverInvertibleWindow) {
  auto cfg = dkf::make_paper_example_1(40, 1, 1);
  // Dynamics are nonsingular on [6, 11), so the conjugated form exists there.
  const Matrix diag = dkf::conjugated_gramian(cfg.model, cfg.sensors, 6, 4);
  EXPECT_TRUE(dkf::is_positive_definite(diag));
}

TEST(ConjugatedGramian, SingularWindowRejected) {
  auto cfg = dkf::make_paper_example_1(40, 1, 1);
  // k = 13 is a singular step; the window [12, 16) straddles it.
  EXPECT_THROW(dkf::conjugated_gramian(cfg.model, cfg.sensors, 12, 4),
               dkf::NumericalError);
}

}  // namespace
