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
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "safe_mppi/dynamics.hpp"
#include "test_util.hpp"

namespace safe_mppi {
namespace {

using testing::vec;

TEST(SingleIntegratorTest, DriftActuationAndEulerStep) {
  const auto model = single_integrator_2d();
  EXPECT_EQ(model.state_dim(), 2);
  EXPECT_EQ(model.input_dim(), 2);
  EXPECT_TRUE(model.drift<double>(vec({1.0, 2.0})).isZero(0.0));
  EXPECT_TRUE(model.actuation<double>(vec({-3.0, 8.0})).isIdentity(0.0));
  const DiscreteDynamics dyn(model, 0.1, Scheme::kEuler);
  const Vec next = step_euler(dyn, vec({0.0, 0.0}), vec({1.0, 2.0}));
  EXPECT_DOUBLE_EQ(next(0), 0.1);
  EXPECT_DOUBLE_EQ(next(1), 0.2);
  EXPECT_EQ(step_euler(dyn, vec({0.3, -0.4}), vec({0.0, 0.0})), vec({0.3, -0.4}));
}

TEST(ExtendedUnicycleTest, DriftAndSteps) {
  const auto model = extended_unicycle();
  EXPECT_EQ(model.state_dim(), 4);
  EXPECT_EQ(model.input_dim(), 2);
  const Vec f0 = model.drift<double>(vec({0, 0, 0, 2}));
  EXPECT_EQ(f0, vec({2, 0, 0, 0}));
  const Vec f1 = model.drift<double>(vec({0, 0, std::numbers::pi / 2, 1}));
  EXPECT_NEAR(f1(0), 0.0, 1e-16);
  EXPECT_DOUBLE_EQ(f1(1), 1.0);
  EXPECT_EQ(f1(2), 0.0);
  EXPECT_EQ(f1(3), 0.0);

  const DiscreteDynamics dyn(model, 0.1, Scheme::kEuler);
  EXPECT_EQ(step_euler(dyn, vec({0, 0, 0, 0}), vec({1, 0})), vec({0, 0, 0, 0.1}));
  const DiscreteDynamics coarse(model, 0.5, Scheme::kEuler);
  EXPECT_EQ(step_euler(coarse, vec({0, 0, 0, 1}), vec({0, 0})), vec({0.5, 0, 0, 1}));
}

TEST(IntegratorTest, InputsAreClampedToBounds) {
  const auto model = single_integrator_2d(InputBounds::symmetric(vec({1.0, 1.0})));
  const DiscreteDynamics dyn(model, 1.0, Scheme::kEuler);
  EXPECT_EQ(step(dyn, vec({0, 0}), vec({2.0, -5.0})), vec({1.0, -1.0}));
}

TEST(IntegratorTest, Rk4OnExponentialDecay) {
  const DiscreteDynamics dyn(testing::scalar_linear(-1.0), 0.1, Scheme::kRk4);
  const Vec next = step_rk4(dyn, vec({1.0}), vec({0.0}));
  EXPECT_NEAR(next(0), std::exp(-0.1), 1e-7);
  EXPECT_NEAR(next(0), 0.904837418, 1e-7);
}

TEST(IntegratorTest, Rk4EqualsEulerOnSingleIntegrator) {
  const DiscreteDynamics euler(single_integrator_2d(), 0.05, Scheme::kEuler);
  const DiscreteDynamics rk4(single_integrator_2d(), 0.05, Scheme::kRk4);
  const Vec x = vec({0.7, -1.2});
  const Vec u = vec({1.3, 0.4});
  EXPECT_EQ(step_euler(euler, x, u), step_rk4(rk4, x, u));
  EXPECT_EQ(step_rk4(rk4, x, vec({0, 0})), x);
}

double global_error(Scheme scheme, double dt) {
  const DiscreteDynamics dyn(testing::scalar_linear(-1.0), dt, scheme);
  Vec x = vec({1.0});
  const int steps = static_cast<int>(std::lround(1.0 / dt));
  for (int k = 0; k < steps; ++k) x = step(dyn, x, vec({0.0}));
  return std::abs(x(0) - std::exp(-1.0));
}

TEST(IntegratorTest, ConvergenceOrder) {
  const std::vector<double> dts = {0.1, 0.05, 0.025};
  for (auto [scheme, order] : {std::pair{Scheme::kEuler, 1.0}, std::pair{Scheme::kRk4, 4.0}}) {
    // Least-squares slope of log(error) against log(dt).
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double dt : dts) {
      const double lx = std::log(dt);
      const double ly = std::log(global_error(scheme, dt));
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    const double n = static_cast<double>(dts.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    EXPECT_NEAR(slope, order, 0.3) << to_string(scheme);
  }
}

TEST(IntegratorTest, EulerMaruyamaWithZeroDiffusionIsEuler) {
  const auto model = extended_unicycle();
  const DiscreteDynamics em(StochasticModel::constant_isotropic(model, 0.0), 0.05, Scheme::kEulerMaruyama);
  const DiscreteDynamics euler(model, 0.05, Scheme::kEuler);
  GaussianStream noise(9, StreamDomain::kTest, 0);
  Vec a = vec({0.1, 0.2, 0.3, 0.4});
  Vec b = a;
  for (int k = 0; k < 100; ++k) {
    const Vec u = vec({std::sin(0.1 * k), std::cos(0.1 * k)});
    a = step_euler_maruyama(em, a, u, noise);
    b = step_euler(euler, b, u);
    ASSERT_EQ(a, b);
  }
}

TEST(IntegratorTest, EulerMaruyamaPureDiffusionVariance) {
  const DiscreteDynamics em(StochasticModel::constant_isotropic(testing::scalar_linear(0.0), 1.0), 0.01,
                            Scheme::kEulerMaruyama);
  const int paths = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int p = 0; p < paths; ++p) {
    GaussianStream noise(5, StreamDomain::kTest, static_cast<std::uint64_t>(p));
    Vec x = vec({0.0});
    for (int k = 0; k < 100; ++k) x = step_euler_maruyama(em, x, vec({0.0}), noise);
    sum += x(0);
    sum2 += x(0) * x(0);
  }
  const double mean = sum / paths;
  const double var = sum2 / paths - mean * mean;
  EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(IntegratorTest, EulerMaruyamaIsDeterministicPerStream) {
  const DiscreteDynamics em(StochasticModel::constant_isotropic(extended_unicycle(), 0.28), 0.05,
                            Scheme::kEulerMaruyama);
  GaussianStream s1(11, StreamDomain::kPlantNoise, 3);
  GaussianStream s2(11, StreamDomain::kPlantNoise, 3);
  const Vec x = vec({0, 0, 0.5, 1.0});
  EXPECT_EQ(step_euler_maruyama(em, x, vec({0.2, 0.1}), s1), step_euler_maruyama(em, x, vec({0.2, 0.1}), s2));
}

TEST(DisturbedStepTest, MatchesEulerPlusDisturbance) {
  const auto model = single_integrator_2d();
  const DisturbedModel dm{model, Mat::Identity(2, 2), vec({0.1, 0.1})};
  const DiscreteDynamics dyn(dm, 1.0, Scheme::kEuler);
  const DiscreteDynamics plain(model, 1.0, Scheme::kEuler);
  const Vec x = vec({0.5, 0.5});
  EXPECT_EQ(disturbed_step(dyn, x, vec({0.3, 0.2}), vec({0, 0})), step_euler(plain, x, vec({0.3, 0.2})));
  const Vec next = disturbed_step(dyn, x, vec({0, 0}), vec({0.1, 0}));
  EXPECT_DOUBLE_EQ(next(0), 0.6);
  EXPECT_DOUBLE_EQ(next(1), 0.5);
  EXPECT_NO_THROW(disturbed_step(dyn, x, vec({0, 0}), vec({0.1, -0.1})));
  EXPECT_THROW(disturbed_step(dyn, x, vec({0, 0}), vec({0.101, 0.0})), ValidationError);
}

TEST(DisturbedModelTest, RejectsNonZeroOneMatrices) {
  const auto model = single_integrator_2d();
  EXPECT_THROW((DisturbedModel{model, Mat::Constant(2, 1, 0.5), vec({1.0})}.validate()), ValidationError);
  EXPECT_THROW((DisturbedModel{model, Mat::Ones(2, 2), vec({1.0, 1.0})}.validate()), ValidationError);
  EXPECT_THROW((DisturbedModel{model, Mat::Identity(2, 2), vec({-1.0, 1.0})}.validate()), ValidationError);
  EXPECT_NO_THROW((DisturbedModel{model, Mat::Identity(2, 2), vec({0.0, 1.0})}.validate()));
}

TEST(DiscreteDynamicsTest, SchemeModelCombinations) {
  const auto model = single_integrator_2d();
  EXPECT_THROW(DiscreteDynamics(model, 0.1, Scheme::kEulerMaruyama), ValidationError);
  EXPECT_THROW(DiscreteDynamics(StochasticModel::constant_isotropic(model, 0.1), 0.1, Scheme::kRk4),
               ValidationError);
  EXPECT_THROW(DiscreteDynamics(model, 0.0, Scheme::kEuler), ValidationError);
}

TEST(DiscreteDynamicsTest, BlowUpIsReported) {
  const DiscreteDynamics dyn(testing::scalar_linear(1e308), 10.0, Scheme::kEuler);
  EXPECT_THROW(step(dyn, vec({10.0}), vec({0.0})), DivergenceError);
}

TEST(ModelPropertyTest, ShapesOverRandomStates) {
  GaussianStream rng(2, StreamDomain::kTest, 0);
  for (const auto& model : {single_integrator_2d(), extended_unicycle()}) {
    for (int trial = 0; trial < 100; ++trial) {
      Vec x(model.state_dim());
      for (int i = 0; i < x.size(); ++i) x(i) = 3.0 * rng.normal();
      EXPECT_EQ(model.drift<double>(x).size(), model.state_dim());
      const Mat g = model.actuation<double>(x);
      EXPECT_EQ(g.rows(), model.state_dim());
      EXPECT_EQ(g.cols(), model.input_dim());
    }
  }
}

TEST(ModelPropertyTest, UnicycleJacobianMatchesFiniteDifferences) {
  const DiscreteDynamics dyn(extended_unicycle(), 0.05, Scheme::kEuler);
  GaussianStream rng(4, StreamDomain::kTest, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec x = vec({rng.normal(), rng.normal(), 3.0 * rng.normal(), rng.normal()});
    const Vec u = vec({rng.normal(), rng.normal()});
    const Mat jac = discrete_jacobian(dyn, x, u);
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
      Vec xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      const Vec fd = (step(dyn, xp, u) - step(dyn, xm, u)) / (2 * h);
      for (int i = 0; i < 4; ++i) ASSERT_TRUE(testing::close_rel(jac(i, j), fd(i), 1e-5));
    }
  }
}

TEST(ModelRegistryTest, BuiltinsAndCustomModels) {
  ModelRegistry registry;
  EXPECT_TRUE(registry.contains("single_integrator_2d"));
  EXPECT_TRUE(registry.contains("extended_unicycle"));
  EXPECT_THROW(registry.make("bicycle"), ValidationError);
  registry.add("decay", [](std::optional<InputBounds>) { return testing::scalar_linear(-1.0); });
  EXPECT_EQ(registry.make("decay").state_dim(), 1);
  const auto bounded = registry.make("single_integrator_2d", InputBounds::symmetric(vec({0.5, 0.5})));
  EXPECT_EQ(bounded.input_bounds().upper, vec({0.5, 0.5}));
}

}  // namespace
}  // namespace safe_mppi
