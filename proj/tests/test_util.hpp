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

// Small models and helpers shared by the unit tests.

#pragma once

#include <cmath>
#include <string>

#include "safe_mppi.hpp"

namespace safe_mppi::testing {

/// x' = a x + b u on R^1, unbounded input.
inline ControlAffineModel scalar_linear(double a, double b = 0.0) {
  auto drift = [a](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    VecX<T> f(1);
    f(0) = T(a) * x(0);
    return f;
  };
  auto actuation = [b](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    MatX<T> g(1, 1);
    g(0, 0) = T(b);
    return g;
  };
  return ControlAffineModel::from_generic("scalar_linear", 1, 1, drift, actuation, InputBounds::unbounded(1),
                                          PositionIndices{0, 0});
}

/// Planar double integrator x = (px, py, vx, vy), u = (ax, ay).
inline ControlAffineModel double_integrator_2d(double bound = 1e9) {
  auto drift = [](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    VecX<T> f(4);
    f << x(2), x(3), T(0.0), T(0.0);
    return f;
  };
  auto actuation = [](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    MatX<T> g = MatX<T>::Zero(4, 2);
    g(2, 0) = T(1.0);
    g(3, 1) = T(1.0);
    return g;
  };
  return ControlAffineModel::from_generic("double_integrator_2d", 4, 2, drift, actuation,
                                          InputBounds::symmetric(Vec::Constant(2, bound)));
}

// Damped planar oscillator x' = A x + B u with A = [[0, 1], [-1, -0.3]], B = [0, 1]^T.
inline ControlAffineModel damped_oscillator() {
  auto drift = [](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    VecX<T> f(2);
    f << x(1), -x(0) - T(0.3) * x(1);
    return f;
  };
  auto actuation = [](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    MatX<T> g = MatX<T>::Zero(2, 1);
    g(1, 0) = T(1.0);
    return g;
  };
  return ControlAffineModel::from_generic("oscillator", 2, 1, drift, actuation, InputBounds::unbounded(1),
                                          PositionIndices{0, 1});
}

inline Vec vec(std::initializer_list<double> values) {
  Vec out(static_cast<int>(values.size()));
  int i = 0;
  for (double v : values) out(i++) = v;
  return out;
}

/// |a - b| <= tol * max(1, |a|, |b|).
inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace safe_mppi::testing
