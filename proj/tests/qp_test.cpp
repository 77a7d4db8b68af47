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

#include <gtest/gtest.h>

#include "safe_mppi/qp.hpp"
#include "safe_mppi/random.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace safe_mppi {
namespace {

using testing::vec;

using testing::grid_oracle;
using testing::GridResult;
using testing::refined_grid_oracle;

QpSpec box_only(Vec ref, double half_width) {
  return QpSpec{std::move(ref), {}, InputBounds::symmetric(Vec::Constant(2, half_width))};
}

TEST(QpTest, UnconstrainedOptimumReturnedExactly) {
  QpSpec spec = box_only(vec({0.123456789, -1.987654321}), 5.0);
  spec.constraints.push_back({vec({1.0, 0.0}), -3.0});
  const QpSolution sol = solve_qp_detailed(spec);
  EXPECT_EQ(sol.u, spec.reference);
  EXPECT_EQ(sol.iterations, 0);
}

TEST(QpTest, SingleHalfspaceProjection) {
  QpSpec spec = box_only(vec({-2.0, 0.0}), 5.0);
  spec.constraints.push_back({vec({4.0, 0.0}), -3.0});
  const QpSolution sol = solve_qp_detailed(spec);
  EXPECT_NEAR(sol.u(0), -0.75, 1e-12);
  EXPECT_NEAR(sol.u(1), 0.0, 1e-12);
  // Stationarity: u - u_ref = lambda a gives lambda = 1.25 / 4.
  EXPECT_NEAR(sol.multipliers[0], 1.25 / 4.0, 1e-12);
  EXPECT_LE(kkt_residual(spec, sol), 1e-9);

  const GridResult grid = grid_oracle(spec);
  ASSERT_TRUE(grid.feasible);
  EXPECT_NEAR(sol.u(0), grid.best(0), 1e-3 + 10.0 / 400);
  EXPECT_NEAR(sol.u(1), grid.best(1), 1e-3 + 10.0 / 400);
}

TEST(QpTest, BoxClampsReference) {
  const QpSpec spec = box_only(vec({7.0, -9.0}), 5.0);
  const ControlVector u = solve_qp(spec);
  EXPECT_DOUBLE_EQ(u(0), 5.0);
  EXPECT_DOUBLE_EQ(u(1), -5.0);
}

TEST(QpTest, ContradictoryConstraintsAreInfeasible) {
  QpSpec spec = box_only(vec({0.0, 0.0}), 5.0);
  spec.constraints.push_back({vec({1.0, 0.0}), 1.0});
  spec.constraints.push_back({vec({-1.0, 0.0}), 1.0});
  EXPECT_THROW(solve_qp(spec), InfeasibleError);
}

TEST(QpTest, ConstraintOutsideBoxIsInfeasible) {
  QpSpec spec = box_only(vec({0.0, 0.0}), 1.0);
  spec.constraints.push_back({vec({1.0, 1.0}), 3.0});
  try {
    solve_qp(spec);
    FAIL() << "expected infeasibility";
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible"), std::string::npos);
  }
}

TEST(QpTest, RejectsMalformedInput) {
  QpSpec spec = box_only(vec({0.0, 0.0}), 1.0);
  spec.constraints.push_back({vec({1.0, 0.0, 0.0}), 0.0});
  EXPECT_THROW(solve_qp(spec), ValidationError);
  spec.constraints = {{vec({std::nan(""), 0.0}), 0.0}};
  EXPECT_THROW(solve_qp(spec), ValidationError);
}

TEST(QpTest, RedundantParallelConstraints) {
  QpSpec spec = box_only(vec({0.0, 0.0}), 5.0);
  spec.constraints.push_back({vec({1.0, 0.0}), 1.0});
  spec.constraints.push_back({vec({2.0, 0.0}), 2.0});
  spec.constraints.push_back({vec({1.0, 0.0}), 0.5});
  const ControlVector u = solve_qp(spec);
  EXPECT_NEAR(u(0), 1.0, 1e-12);
  EXPECT_NEAR(u(1), 0.0, 1e-12);
}

TEST(QpTest, RandomProblemsAgainstGridOracle) {
  GaussianStream rng(2024, StreamDomain::kTest, 1);
  int feasible = 0, infeasible = 0;
  for (int trial = 0; trial < 500; ++trial) {
    QpSpec spec = box_only(vec({3.0 * rng.normal(), 3.0 * rng.normal()}), 2.0 + 3.0 * rng.uniform());
    const int count = 1 + trial % 6;
    for (int c = 0; c < count; ++c) {
      spec.constraints.push_back({vec({rng.normal(), rng.normal()}), 2.0 * rng.normal()});
    }
    const GridResult grid = refined_grid_oracle(spec);
    QpSolution sol;
    try {
      sol = solve_qp_detailed(spec);
    } catch (const InfeasibleError&) {
      ++infeasible;
      EXPECT_FALSE(grid.feasible) << "trial " << trial;
      continue;
    }
    ++feasible;
    for (const auto& c : spec.constraints) EXPECT_GE(c.slack(sol.u), -1e-8) << "trial " << trial;
    EXPECT_TRUE(spec.box.contains(sol.u));
    EXPECT_LE(kkt_residual(spec, sol), 1e-6) << "trial " << trial;
    if (grid.feasible) {
      EXPECT_LE((sol.u - spec.reference).norm(), grid.distance + 1e-12) << "trial " << trial;
      EXPECT_LE((sol.u - grid.best).norm(), 1e-2) << "trial " << trial;
    }
  }
  EXPECT_GT(feasible, 250);
  EXPECT_GT(infeasible, 0);
}

TEST(QpTest, SingleGridArgminIsOnlyCellAccurate) {
  // A line constraint far from the reference: many grid points tie to within
  // the grid's own resolution, so only the refined oracle pins the optimum.
  QpSpec spec = box_only(vec({-4.0, 2.0}), 5.0);
  spec.constraints.push_back({vec({0.8, 0.6}), 1.3});
  const ControlVector u = solve_qp(spec);
  const Vec exact = spec.reference + (1.3 - spec.constraints[0].normal.dot(spec.reference)) * spec.constraints[0].normal;
  EXPECT_NEAR((u - exact).norm(), 0.0, 1e-12);
  EXPECT_LE((refined_grid_oracle(spec).best - exact).norm(), 1e-2);
  EXPECT_LE((grid_oracle(spec).best - exact).norm(), 0.5);
}

TEST(QpTest, FeasibleReferencePassesThroughBitExact) {
  GaussianStream rng(77, StreamDomain::kTest, 2);
  for (int trial = 0; trial < 200; ++trial) {
    QpSpec spec = box_only(vec({rng.normal(), rng.normal()}), 5.0);
    for (int c = 0; c < 3; ++c) {
      const Vec a = vec({rng.normal(), rng.normal()});
      spec.constraints.push_back({a, a.dot(spec.reference) - std::abs(rng.normal())});
    }
    EXPECT_EQ(solve_qp(spec), spec.reference);
  }
}

}  // namespace
}  // namespace safe_mppi
