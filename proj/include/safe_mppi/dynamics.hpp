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

// Control-affine system models (deterministic, bounded-disturbance and
// stochastic) and the fixed-step integrators that turn them into a discrete
// map x_{k+1} = F(x_k, u_k). Controls are held constant over a step and
// clamped to the model's input bounds before use.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "safe_mppi/dual.hpp"
#include "safe_mppi/errors.hpp"
#include "safe_mppi/random.hpp"

namespace safe_mppi {

using StateVector = Vec;
using ControlVector = Vec;

struct InputBounds {
  Vec lower;
  Vec upper;

  static InputBounds unbounded(int m) {
    const double inf = std::numeric_limits<double>::infinity();
    return {Vec::Constant(m, -inf), Vec::Constant(m, inf)};
  }
  static InputBounds symmetric(const Vec& half_width) { return {-half_width, half_width}; }

  int dim() const { return static_cast<int>(lower.size()); }

  Vec clamp(const Vec& u) const { return u.cwiseMax(lower).cwiseMin(upper); }

  bool contains(const Vec& u) const {
    for (int i = 0; i < u.size(); ++i) {
      if (u(i) < lower(i) || u(i) > upper(i)) return false;
    }
    return true;
  }

  void validate() const {
    if (lower.size() != upper.size()) throw ValidationError("input bounds: size mismatch");
    for (int i = 0; i < lower.size(); ++i) {
      if (!(lower(i) <= upper(i))) throw ValidationError("input bounds: lower > upper");
    }
  }
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(Point2 a, Point2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

/// Which state entries hold the planar position.
struct PositionIndices {
  int x = 0;
  int y = 1;
};

/// x' = f(x) + g(x) u.
class ControlAffineModel {
 public:
  ControlAffineModel() = default;

  /// Builds a model from generic callables `drift(VecX<T>) -> VecX<T>` and
  /// `actuation(VecX<T>) -> MatX<T>` instantiated at every derivative level.
  template <class DriftFn, class ActuationFn>
  static ControlAffineModel from_generic(std::string id, int n, int m, const DriftFn& drift,
                                         const ActuationFn& actuation, InputBounds bounds,
                                         PositionIndices position = {}) {
    if (n < 1 || m < 1 || n > kMaxDim || m > kMaxDim) {
      throw ValidationError("model '" + id + "': dimensions out of range");
    }
    if (bounds.dim() != m) throw ValidationError("model '" + id + "': bounds dimension != m");
    bounds.validate();
    ControlAffineModel out;
    out.id_ = std::move(id);
    out.n_ = n;
    out.m_ = m;
    out.drift_ = Ladder<VectorFnSig>::from_generic(drift);
    out.actuation_ = Ladder<MatrixFnSig>::from_generic(actuation);
    out.bounds_ = std::move(bounds);
    out.position_ = position;
    return out;
  }

  const std::string& id() const { return id_; }
  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  const InputBounds& input_bounds() const { return bounds_; }
  void set_input_bounds(InputBounds b) {
    if (b.dim() != m_) throw ValidationError("input bounds dimension mismatch");
    b.validate();
    bounds_ = std::move(b);
  }
  PositionIndices position() const { return position_; }

  template <class T>
  VecX<T> drift(const VecX<T>& x) const {
    return drift_.at<T>()(x);
  }
  template <class T>
  MatX<T> actuation(const VecX<T>& x) const {
    return actuation_.at<T>()(x);
  }
  /// f(x) + g(x) u, with u lifted to the scalar type of x.
  template <class T>
  VecX<T> velocity(const VecX<T>& x, const Vec& u) const {
    VecX<T> xdot = drift<T>(x);
    const MatX<T> g = actuation<T>(x);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < m_; ++j) xdot(i) += g(i, j) * T(u(j));
    }
    return xdot;
  }

 private:
  std::string id_;
  int n_ = 0;
  int m_ = 0;
  Ladder<VectorFnSig> drift_;
  Ladder<MatrixFnSig> actuation_;
  InputBounds bounds_;
  PositionIndices position_;
};

/// x' = f(x) + g(x) u + M w with w in the hypercube |w_i| <= bound_i.
struct DisturbedModel {
  ControlAffineModel base;
  Mat disturbance_matrix;  // n x l, zero-one, at most one nonzero per row
  Vec disturbance_bound;   // l half-widths

  void validate() const {
    if (disturbance_matrix.rows() != base.state_dim()) {
      throw ValidationError("disturbance matrix must have n rows");
    }
    if (disturbance_matrix.cols() != disturbance_bound.size()) {
      throw ValidationError("disturbance bound length must equal columns of M");
    }
    for (int i = 0; i < disturbance_matrix.rows(); ++i) {
      int nonzero = 0;
      for (int j = 0; j < disturbance_matrix.cols(); ++j) {
        const double v = disturbance_matrix(i, j);
        if (v != 0.0 && v != 1.0) throw ValidationError("disturbance matrix must be zero-one");
        nonzero += v != 0.0;
      }
      if (nonzero > 1) throw ValidationError("disturbance matrix row with more than one nonzero");
    }
    for (int j = 0; j < disturbance_bound.size(); ++j) {
      if (!(disturbance_bound(j) >= 0.0)) throw ValidationError("disturbance bound must be >= 0");
    }
  }
};

/// dx = (f + g u) dt + sigma(x) dW with W a q-dimensional Wiener process.
struct StochasticModel {
  ControlAffineModel base;
  std::function<Mat(const Vec&)> diffusion;  // n x q
  int noise_dim = 0;

  static StochasticModel constant_isotropic(ControlAffineModel base, double sigma) {
    const int n = base.state_dim();
    StochasticModel out{std::move(base), nullptr, n};
    out.diffusion = [n, sigma](const Vec&) -> Mat { return sigma * Mat::Identity(n, n); };
    return out;
  }
};

enum class Scheme { kEuler, kRk4, kEulerMaruyama };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kEuler: return "euler";
    case Scheme::kRk4: return "rk4";
    case Scheme::kEulerMaruyama: return "euler_maruyama";
  }
  return "?";
}

using AnyModel = std::variant<ControlAffineModel, DisturbedModel, StochasticModel>;

/// A model with a timestep and integration scheme.
class DiscreteDynamics {
 public:
  DiscreteDynamics(AnyModel model, double dt, Scheme scheme)
      : model_(std::move(model)), dt_(dt), scheme_(scheme) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive");
    const bool stochastic = std::holds_alternative<StochasticModel>(model_);
    if (scheme == Scheme::kEulerMaruyama && !stochastic) {
      throw ValidationError("euler_maruyama requires a stochastic model");
    }
    if (scheme == Scheme::kRk4 && !std::holds_alternative<ControlAffineModel>(model_)) {
      throw ValidationError("rk4 requires a deterministic model");
    }
    if (auto* d = std::get_if<DisturbedModel>(&model_)) d->validate();
    if (auto* s = std::get_if<StochasticModel>(&model_)) {
      if (!s->diffusion || s->noise_dim < 1) throw ValidationError("stochastic model needs sigma");
    }
  }

  const ControlAffineModel& base() const {
    return std::visit(
        [](const auto& m) -> const ControlAffineModel& {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, ControlAffineModel>) {
            return m;
          } else {
            return m.base;
          }
        },
        model_);
  }
  const AnyModel& model() const { return model_; }
  double dt() const { return dt_; }
  Scheme scheme() const { return scheme_; }

  /// Deterministic one-step map at any derivative level. Euler-Maruyama and
  /// disturbed models fall back to their drift (Euler) part.
  template <class T>
  VecX<T> step_nominal(const VecX<T>& x, const Vec& u_raw) const {
    const ControlAffineModel& m = base();
    const Vec u = m.input_bounds().clamp(u_raw);
    const T h(dt_);
    if (scheme_ == Scheme::kRk4) {
      const VecX<T> k1 = m.velocity<T>(x, u);
      const VecX<T> k2 = m.velocity<T>(VecX<T>(x + k1 * (h * T(0.5))), u);
      const VecX<T> k3 = m.velocity<T>(VecX<T>(x + k2 * (h * T(0.5))), u);
      const VecX<T> k4 = m.velocity<T>(VecX<T>(x + k3 * h), u);
      return x + (k1 + k2 * T(2.0) + k3 * T(2.0) + k4) * (h / T(6.0));
    }
    return x + m.velocity<T>(x, u) * h;
  }

 private:
  AnyModel model_;
  double dt_;
  Scheme scheme_;
};

namespace detail {

inline void check_finite(const StateVector& x, const char* where) {
  if (!x.allFinite()) {
    std::ostringstream os;
    os << where << ": non-finite state [" << x.transpose() << "]";
    throw DivergenceError(os.str());
  }
}

inline void check_shapes(const DiscreteDynamics& dyn, const StateVector& x, const ControlVector& u) {
  if (x.size() != dyn.base().state_dim() || u.size() != dyn.base().input_dim()) {
    throw ValidationError("state/control dimension mismatch for model " + dyn.base().id());
  }
}

}  // namespace detail

inline StateVector step_euler(const DiscreteDynamics& dyn, const StateVector& x,
                              const ControlVector& u) {
  if (dyn.scheme() != Scheme::kEuler) throw ValidationError("step_euler: scheme is not euler");
  detail::check_shapes(dyn, x, u);
  StateVector next = dyn.step_nominal<double>(x, u);
  detail::check_finite(next, "step_euler");
  return next;
}

inline StateVector step_rk4(const DiscreteDynamics& dyn, const StateVector& x,
                            const ControlVector& u) {
  if (dyn.scheme() != Scheme::kRk4) throw ValidationError("step_rk4: scheme is not rk4");
  detail::check_shapes(dyn, x, u);
  StateVector next = dyn.step_nominal<double>(x, u);
  detail::check_finite(next, "step_rk4");
  return next;
}

/// Draws q standard normals from `noise` and scales them by sqrt(dt).
inline StateVector step_euler_maruyama(const DiscreteDynamics& dyn, const StateVector& x,
                                       const ControlVector& u, GaussianStream& noise) {
  if (dyn.scheme() != Scheme::kEulerMaruyama) {
    throw ValidationError("step_euler_maruyama: scheme is not euler_maruyama");
  }
  detail::check_shapes(dyn, x, u);
  const auto& sde = std::get<StochasticModel>(dyn.model());
  const Mat sigma = sde.diffusion(x);
  if (sigma.rows() != x.size() || sigma.cols() != sde.noise_dim) {
    throw ValidationError("diffusion has wrong shape");
  }
  Vec dw(sde.noise_dim);
  const double sqrt_dt = std::sqrt(dyn.dt());
  for (int i = 0; i < sde.noise_dim; ++i) dw(i) = sqrt_dt * noise.normal();
  StateVector next = dyn.step_nominal<double>(x, u) + sigma * dw;
  detail::check_finite(next, "step_euler_maruyama");
  return next;
}

/// Euler step of x' = f + g u + M w; rejects w outside the hypercube.
inline StateVector disturbed_step(const DiscreteDynamics& dyn, const StateVector& x,
                                  const ControlVector& u, const Vec& w) {
  const auto* dm = std::get_if<DisturbedModel>(&dyn.model());
  if (dm == nullptr) throw ValidationError("disturbed_step requires a disturbed model");
  detail::check_shapes(dyn, x, u);
  if (w.size() != dm->disturbance_bound.size()) throw ValidationError("disturbance size mismatch");
  for (int i = 0; i < w.size(); ++i) {
    if (std::abs(w(i)) > dm->disturbance_bound(i)) {
      std::ostringstream os;
      os << "disturbance component " << i << " = " << w(i) << " outside bound "
         << dm->disturbance_bound(i);
      throw ValidationError(os.str());
    }
  }
  StateVector next = dyn.step_nominal<double>(x, u) + dyn.dt() * (dm->disturbance_matrix * w);
  detail::check_finite(next, "disturbed_step");
  return next;
}

/// Deterministic step for euler/rk4 dynamics.
inline StateVector step(const DiscreteDynamics& dyn, const StateVector& x, const ControlVector& u) {
  detail::check_shapes(dyn, x, u);
  StateVector next = dyn.step_nominal<double>(x, u);
  detail::check_finite(next, "step");
  return next;
}

/// State Jacobian of the deterministic discrete map at (x, u).
inline Mat discrete_jacobian(const DiscreteDynamics& dyn, const StateVector& x,
                             const ControlVector& u) {
  return jacobian<double>([&](const VecX<D1>& xd) { return dyn.step_nominal<D1>(xd, u); }, x);
}

// Built-in models ----------------------------------------------------------

/// Planar single integrator: x = (px, py), u = (vx, vy).
inline ControlAffineModel single_integrator_2d(std::optional<InputBounds> bounds = std::nullopt) {
  auto drift = [](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    return VecX<T>(VecX<T>::Zero(2));
  };
  auto actuation = [](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    return MatX<T>(MatX<T>::Identity(2, 2));
  };
  return ControlAffineModel::from_generic(
      "single_integrator_2d", 2, 2, drift, actuation,
      bounds.value_or(InputBounds::symmetric(Vec::Constant(2, 2.0))));
}

/// Unicycle with speed as a state: x = (px, py, theta, v), u = (a, omega).
inline ControlAffineModel extended_unicycle(std::optional<InputBounds> bounds = std::nullopt) {
  auto drift = [](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    using std::cos;
    using std::sin;
    VecX<T> f(4);
    f(0) = x(3) * cos(x(2));
    f(1) = x(3) * sin(x(2));
    f(2) = T(0.0);
    f(3) = T(0.0);
    return f;
  };
  auto actuation = [](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    MatX<T> g = MatX<T>::Zero(4, 2);
    g(3, 0) = T(1.0);  // a -> v'
    g(2, 1) = T(1.0);  // omega -> theta'
    return g;
  };
  Vec half(2);
  half << 3.0, 3.0;
  return ControlAffineModel::from_generic("extended_unicycle", 4, 2, drift, actuation,
                                          bounds.value_or(InputBounds::symmetric(half)));
}

/// Name -> factory lookup used by scenario files. Custom models are added
/// with add(); the built-ins are always present.
class ModelRegistry {
 public:
  using Factory = std::function<ControlAffineModel(std::optional<InputBounds>)>;

  ModelRegistry() {
    add("single_integrator_2d", [](std::optional<InputBounds> b) { return single_integrator_2d(b); });
    add("extended_unicycle", [](std::optional<InputBounds> b) { return extended_unicycle(b); });
  }

  void add(const std::string& id, Factory factory) { factories_[id] = std::move(factory); }
  bool contains(const std::string& id) const { return factories_.count(id) != 0; }

  ControlAffineModel make(const std::string& id, std::optional<InputBounds> bounds = {}) const {
    auto it = factories_.find(id);
    if (it == factories_.end()) throw ValidationError("unknown model id '" + id + "'");
    return it->second(std::move(bounds));
  }

  static const ModelRegistry& builtin() {
    static const ModelRegistry registry;
    return registry;
  }

 private:
  std::map<std::string, Factory> factories_;
};

}  // namespace safe_mppi
