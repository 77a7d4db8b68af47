// Copyright 2026 The safe_mppi Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "safe_mppi/mppi.hpp"
#include "test_util.hpp"

namespace safe_mppi {
namespace {

using testing::vec;

MppiConfig config(int horizon, int samples, double stddev, double bound = 2.0, double lambda = 1.0) {
  MppiConfig cfg;
  cfg.horizon = horizon;
  cfg.samples = samples;
  cfg.temperature = lambda;
  cfg.noise_covariance = MppiConfig::diagonal_covariance(Vec::Constant(2, stddev));
  cfg.control_bounds = InputBounds::symmetric(Vec::Constant(2, bound));
  cfg.seed = 3;
  return cfg;
}

TaskSet single_goal(Point2 p) {
  TaskSet tasks;
  GoalTask g;
  g.position = p;
  g.radius = 0.3;
  tasks.goals.push_back(g);
  return tasks;
}

TEST(MppiConfigTest, Validation) {
  EXPECT_NO_THROW(config(10, 10, 0.5).validate());
  MppiConfig bad = config(10, 10, 0.5);
  bad.temperature = 0.0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = config(0, 10, 0.5);
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = config(10, 10, 0.5);
  bad.noise_covariance(0, 1) = 1.0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad.noise_covariance << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(MppiConfigTest, DefaultCovarianceIsQuarterHalfWidth) {
  const Mat cov = MppiConfig::default_covariance(InputBounds::symmetric(vec({2.0, 4.0})));
  EXPECT_DOUBLE_EQ(cov(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(cov(1, 1), 1.0);
  EXPECT_EQ(cov(0, 1), 0.0);
}

TEST(SampleNoiseTest, ZeroCovarianceGivesZeros) {
  MppiConfig cfg = config(5, 7, 0.0);
  const NoiseTensor noise = sample_noise(cfg, 0);
  for (double v : noise.data) EXPECT_EQ(v, 0.0);
}

TEST(SampleNoiseTest, EmpiricalVarianceMatchesCovariance) {
  MppiConfig cfg = config(1, 100000, 1.0);
  cfg.noise_covariance = MppiConfig::diagonal_covariance(vec({0.5, 2.0}));
  const NoiseTensor noise = sample_noise(cfg, 0);
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sum2 = 0.0;
    for (int k = 0; k < cfg.samples; ++k) {
      sum += noise.at(k, 0, c);
      sum2 += noise.at(k, 0, c) * noise.at(k, 0, c);
    }
    const double mean = sum / cfg.samples;
    const double var = sum2 / cfg.samples - mean * mean;
    EXPECT_NEAR(var / cfg.noise_covariance(c, c), 1.0, 0.02);
  }
}

TEST(SampleNoiseTest, CorrelatedCovarianceIsReproduced) {
  MppiConfig cfg = config(1, 100000, 1.0);
  cfg.noise_covariance << 1.0, 0.6, 0.6, 2.0;
  const NoiseTensor noise = sample_noise(cfg, 4);
  double c01 = 0.0;
  for (int k = 0; k < cfg.samples; ++k) c01 += noise.at(k, 0, 0) * noise.at(k, 0, 1);
  EXPECT_NEAR(c01 / cfg.samples, 0.6, 0.03);
}

TEST(SampleNoiseTest, DeterministicAndWorkerIndependent) {
  MppiConfig cfg = config(8, 300, 0.7);
  const NoiseTensor a = sample_noise(cfg, 2);
  EXPECT_EQ(a.data, sample_noise(cfg, 2).data);
  cfg.workers = 8;
  EXPECT_EQ(a.data, sample_noise(cfg, 2).data);
  EXPECT_NE(a.data, sample_noise(cfg, 3).data);
}

TEST(RolloutTest, Examples) {
  const DiscreteDynamics dyn(single_integrator_2d(), 0.1, Scheme::kEuler);
  const Eigen::MatrixXd still = rollout(dyn, vec({0.5, 0.5}), ControlSequence::zeros(4, 2), Eigen::MatrixXd());
  for (int t = 0; t <= 4; ++t) EXPECT_EQ(still.row(t), Eigen::RowVector2d(0.5, 0.5));

  ControlSequence v = ControlSequence::zeros(3, 2);
  v.controls.col(0).setConstant(1.0);
  const Eigen::MatrixXd moving = rollout(dyn, vec({0.0, 0.0}), v, Eigen::MatrixXd());
  EXPECT_DOUBLE_EQ(moving(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(moving(1, 0), 0.1);
  EXPECT_DOUBLE_EQ(moving(2, 0), 0.2);
  EXPECT_NEAR(moving(3, 0), 0.3, 1e-15);

  const DiscreteDynamics bounded(single_integrator_2d(InputBounds::symmetric(vec({1.0, 1.0}))), 0.1,
                                 Scheme::kEuler);
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(3, 2);
  noise(0, 0) = 1.0;  // v + w = 2 on channel 0
  const Eigen::MatrixXd clamped = rollout(bounded, vec({0.0, 0.0}), v, noise);
  EXPECT_DOUBLE_EQ(clamped(1, 0), 0.1);
}

TEST(SampleCostTest, ControlTermArithmetic) {
  const DiscreteDynamics dyn(single_integrator_2d(), 0.1, Scheme::kEuler);
  MppiConfig cfg = config(1, 1, 1.0, 2.0, 2.0);
  const TaskSet tasks = single_goal({1, 0});
  const HistoryBuffer h(0.1);
  ControlSequence zero = ControlSequence::zeros(1, 2);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> traj =
      rollout(dyn, vec({0.3, -0.4}), zero, Eigen::MatrixXd());
  const RolloutView view{traj.data(), 2, 2, dyn.base().position()};
  const double task = trajectory_task_cost(tasks, view, h, 0.0, 0.1);
  EXPECT_DOUBLE_EQ(sample_cost(view, zero, cfg, tasks, h, 0.0, 0.1), task);

  ControlSequence ones = ControlSequence::zeros(1, 2);
  ones.controls.setOnes();
  EXPECT_DOUBLE_EQ(control_cost(ones, cfg), 2.0);
  MppiConfig doubled = cfg;
  doubled.temperature = 4.0;
  EXPECT_DOUBLE_EQ(control_cost(ones, doubled), 2.0 * control_cost(ones, cfg));
  EXPECT_DOUBLE_EQ(sample_cost(view, ones, doubled, tasks, h, 0.0, 0.1) - control_cost(ones, doubled), task);
}

TEST(SoftminTest, Examples) {
  const auto uniform = softmin_weights({2.0, 2.0, 2.0, 2.0}, 0.5);
  for (double w : uniform) EXPECT_DOUBLE_EQ(w, 0.25);
  const auto two = softmin_weights({0.0, std::log(3.0)}, 1.0);
  EXPECT_NEAR(two[0], 0.75, 1e-15);
  EXPECT_NEAR(two[1], 0.25, 1e-15);
  const auto masked = softmin_weights({0.0, std::numeric_limits<double>::infinity()}, 1.0);
  EXPECT_EQ(masked[0], 1.0);
  EXPECT_EQ(masked[1], 0.0);
  const auto nan_masked = softmin_weights({std::nan(""), 3.0}, 1.0);
  EXPECT_EQ(nan_masked[1], 1.0);
  EXPECT_THROW(softmin_weights({std::numeric_limits<double>::infinity()}, 1.0), NoFeasibleRollout);
}

TEST(SoftminTest, SimplexAndShiftInvariance) {
  GaussianStream rng(8, StreamDomain::kTest, 0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> costs(200);
    for (double& c : costs) c = 50.0 * rng.uniform();
    const double lambda = 0.01 + 5.0 * rng.uniform();
    const auto w = softmin_weights(costs, lambda);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    for (double x : w) EXPECT_GE(x, 0.0);
    std::vector<double> shifted = costs;
    for (double& c : shifted) c += 1234.5;
    const auto ws = softmin_weights(shifted, lambda);
    for (std::size_t k = 0; k < w.size(); ++k) EXPECT_NEAR(w[k], ws[k], 1e-12);
  }
}

TEST(UpdateMeanTest, Examples) {
  NoiseTensor noise{2, 1, 2, {0.3, -0.2, -0.3, 0.2}};
  const ControlSequence v = ControlSequence::zeros(1, 2);
  const InputBounds wide = InputBounds::symmetric(vec({5.0, 5.0}));
  const ControlSequence all_on_first = update_mean(v, noise, {1.0, 0.0}, wide);
  EXPECT_DOUBLE_EQ(all_on_first.controls(0, 0), 0.3);
  EXPECT_DOUBLE_EQ(all_on_first.controls(0, 1), -0.2);
  const ControlSequence cancel = update_mean(v, noise, {0.5, 0.5}, wide);
  EXPECT_EQ(cancel.controls(0, 0), 0.0);
  EXPECT_EQ(cancel.controls(0, 1), 0.0);
  const ControlSequence tight = update_mean(v, noise, {1.0, 0.0}, InputBounds::symmetric(vec({0.1, 0.1})));
  EXPECT_DOUBLE_EQ(tight.controls(0, 0), 0.1);
  EXPECT_DOUBLE_EQ(tight.controls(0, 1), -0.1);
}

TEST(UpdateMeanTest, UniformWeightsShiftShrinksWithK) {
  MppiConfig cfg = config(4, 20000, 1.0, 100.0);
  const NoiseTensor noise = sample_noise(cfg, 0);
  const std::vector<double> w(static_cast<std::size_t>(cfg.samples), 1.0 / cfg.samples);
  const ControlSequence shifted = update_mean(ControlSequence::zeros(4, 2), noise, w, cfg.control_bounds);
  EXPECT_LT(shifted.controls.cwiseAbs().maxCoeff(), 3.0 * 1.0 / std::sqrt(cfg.samples) * 1.5);
}

TEST(UpdateMeanTest, SmallTemperatureSelectsArgmin) {
  MppiConfig cfg = config(3, 50, 1.0, 100.0);
  const NoiseTensor noise = sample_noise(cfg, 0);
  GaussianStream rng(10, StreamDomain::kTest, 0);
  std::vector<double> costs(50);
  for (double& c : costs) c = rng.uniform();
  const auto best = static_cast<int>(std::min_element(costs.begin(), costs.end()) - costs.begin());
  const auto w = softmin_weights(costs, 1e-6);
  const ControlSequence mean = update_mean(ControlSequence::zeros(3, 2), noise, w, cfg.control_bounds);
  for (int t = 0; t < 3; ++t) {
    for (int c = 0; c < 2; ++c) EXPECT_NEAR(mean.controls(t, c), noise.at(best, t, c), 1e-6);
  }
}

TEST(UpdateMeanTest, ClampIsIdempotent) {
  const InputBounds b = InputBounds::symmetric(vec({1.0, 0.5}));
  const Vec u = vec({3.0, -0.7});
  EXPECT_EQ(b.clamp(b.clamp(u)), b.clamp(u));
}

TEST(RecedingShiftTest, Examples) {
  ControlSequence v{Eigen::MatrixXd(3, 1)};
  v.controls << 1, 2, 3;
  EXPECT_EQ(receding_shift(v).controls, (Eigen::MatrixXd(3, 1) << 2, 3, 3).finished());
  ControlSequence c{Eigen::MatrixXd::Constant(4, 2, 0.7)};
  EXPECT_EQ(receding_shift(c).controls, c.controls);
  ControlSequence one{Eigen::MatrixXd::Constant(1, 2, -0.3)};
  EXPECT_EQ(receding_shift(one).controls, one.controls);
}

TEST(SolveTest, SingleSampleAddsItsNoise) {
  const DiscreteDynamics dyn(single_integrator_2d(), 0.1, Scheme::kEuler);
  MppiConfig cfg = config(5, 1, 0.4, 100.0, 3.0);
  ControlSequence warm = ControlSequence::zeros(5, 2);
  warm.controls.col(1).setConstant(0.2);
  const MppiSolution sol = solve(cfg, dyn, vec({0, 0}), single_goal({1, 1}), HistoryBuffer(0.1), 0.0, warm);
  const NoiseTensor noise = sample_noise(cfg, 0);
  ASSERT_EQ(sol.weights.size(), 1u);
  EXPECT_EQ(sol.weights[0], 1.0);
  for (int t = 0; t < 5; ++t) {
    for (int c = 0; c < 2; ++c) EXPECT_DOUBLE_EQ(sol.mean.controls(t, c), warm.controls(t, c) + noise.at(0, t, c));
  }
}

TEST(SolveTest, ZeroNoiseKeepsWarmStart) {
  const DiscreteDynamics dyn(single_integrator_2d(), 0.1, Scheme::kEuler);
  MppiConfig cfg = config(6, 20, 0.0);
  ControlSequence warm = ControlSequence::zeros(6, 2);
  warm.controls.col(0).setConstant(0.5);
  const MppiSolution sol = solve(cfg, dyn, vec({0, 0}), single_goal({1, 1}), HistoryBuffer(0.1), 0.0, warm);
  EXPECT_EQ(sol.mean.controls, warm.controls);
  EXPECT_EQ(sol.nominal_trajectory, rollout(dyn, vec({0, 0}), warm, Eigen::MatrixXd()));
}

TEST(SolveTest, InvariantsOfTheSolution) {
  const DiscreteDynamics dyn(extended_unicycle(), 0.05, Scheme::kEuler);
  MppiConfig cfg = config(20, 500, 1.0, 3.0);
  const Vec x0 = vec({0, 0, 0.3, 0.5});
  const MppiSolution sol = solve(cfg, dyn, x0, single_goal({3, 2}), HistoryBuffer(0.05), 0.0,
                                 ControlSequence::zeros(20, 2));
  EXPECT_NEAR(std::accumulate(sol.weights.begin(), sol.weights.end(), 0.0), 1.0, 1e-12);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(sol.nominal_trajectory(0, i), x0(i));
  EXPECT_EQ(sol.nominal_trajectory, rollout(dyn, x0, sol.mean, Eigen::MatrixXd()));
  for (int t = 0; t < 20; ++t) EXPECT_TRUE(cfg.control_bounds.contains(sol.mean.at(t)));

  MppiConfig parallel = cfg;
  parallel.workers = 8;
  const MppiSolution sol8 = solve(parallel, dyn, x0, single_goal({3, 2}), HistoryBuffer(0.05), 0.0,
                                  ControlSequence::zeros(20, 2));
  EXPECT_EQ(sol.mean.controls, sol8.mean.controls);
  EXPECT_EQ(sol.weights, sol8.weights);
}

TEST(SolveTest, DivergentSamplesAreMasked) {
  const DiscreteDynamics dyn(testing::scalar_linear(1e200, 1.0), 1.0, Scheme::kEuler);
  MppiConfig cfg;
  cfg.horizon = 3;
  cfg.samples = 10;
  cfg.noise_covariance = Mat::Identity(1, 1);
  cfg.control_bounds = InputBounds::unbounded(1);
  TaskSet tasks;
  tasks.goals.push_back(GoalTask{});
  EXPECT_THROW(solve(cfg, dyn, vec({1.0}), tasks, HistoryBuffer(1.0), 0.0, ControlSequence::zeros(3, 1)),
               NoFeasibleRollout);
}

TEST(SolveTest, UpdatedMeanImprovesOnWarmStart) {
  const DiscreteDynamics dyn(single_integrator_2d(), 0.05, Scheme::kEuler);
  MppiConfig cfg = config(50, 10000, 0.5);
  const TaskSet tasks = single_goal({2.0, 2.5});
  const HistoryBuffer h(0.05);
  const TaskCostEvaluator eval(tasks, h, 0.0, cfg.horizon, dyn.dt(), {});
  const ControlSequence warm = ControlSequence::zeros(50, 2);
  const double warm_cost = sequence_cost(cfg, dyn, vec({0, 0}), warm, eval);
  int improved = 0;
  for (int trial = 0; trial < 100; ++trial) {
    cfg.seed = static_cast<std::uint64_t>(trial);
    improved += solve(cfg, dyn, vec({0, 0}), tasks, h, 0.0, warm).nominal_cost < warm_cost;
  }
  EXPECT_GE(improved, 95);
}

TEST(MppiPlannerTest, WarmStartsWithShiftedMean) {
  const DiscreteDynamics dyn(single_integrator_2d(), 0.1, Scheme::kEuler);
  MppiPlanner planner(config(5, 50, 0.5), dyn);
  const TaskSet tasks = single_goal({1, 1});
  HistoryBuffer h(0.1);
  const MppiSolution first = planner.plan(vec({0, 0}), tasks, h, 0.0);
  h.append(vec({0, 0}));
  EXPECT_EQ(planner.cycle(), 1);
  MppiConfig cfg = config(5, 50, 0.5);
  const MppiSolution second = planner.plan(vec({0.1, 0.1}), tasks, h, 0.1);
  const MppiSolution manual = solve(cfg, dyn, vec({0.1, 0.1}), tasks, h, 0.1, receding_shift(first.mean), 1);
  EXPECT_EQ(second.mean.controls, manual.mean.controls);
}

}  // namespace
}  // namespace safe_mppi
