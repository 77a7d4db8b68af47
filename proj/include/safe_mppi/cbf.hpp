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

// Control barrier functions: a barrier h defines the safe set {x : h(x) >= 0}
// and the condition  dh/dx (f + g u) >= -gamma h  keeps it forward invariant.
// This header assembles that condition (and its bounded-disturbance and Ito
// variants) as a halfspace in u, lifts relative-degree > 1 barriers to a
// relative-degree-1 surrogate, and projects a nominal control onto the
// resulting constraint set.

#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "safe_mppi/dual.hpp"
#include "safe_mppi/dynamics.hpp"
#include "safe_mppi/errors.hpp"
#include "safe_mppi/qp.hpp"
#include "safe_mppi/random.hpp"

namespace safe_mppi {

/// Scalar safety function with derivatives by forward-mode differentiation.
/// depth() is the number of derivative levels available: gradient needs 1,
/// Hessian needs 2.
class BarrierFunction {
 public:
  BarrierFunction() = default;

  template <class F>
  static BarrierFunction from_generic(std::string name, const F& h) {
    BarrierFunction out;
    out.name_ = std::move(name);
    out.ladder_ = Ladder<ScalarFnSig>::from_generic(h);
    return out;
  }

  static BarrierFunction from_ladder(std::string name, Ladder<ScalarFnSig> ladder,
                                     int source_relative_degree = 1) {
    BarrierFunction out;
    out.name_ = std::move(name);
    out.ladder_ = std::move(ladder);
    out.relative_degree_ = source_relative_degree;
    return out;
  }

  const std::string& name() const { return name_; }
  int depth() const { return ladder_.depth(); }
  const Ladder<ScalarFnSig>& ladder() const { return ladder_; }
  /// Relative degree of the barrier this one was rectified from (1 if untouched).
  int source_relative_degree() const { return relative_degree_; }

  double value(const Vec& x) const { return ladder_.at<double>()(x); }

  Vec gradient(const Vec& x) const {
    require(1, "gradient");
    return safe_mppi::gradient<double>(ladder_.at<D1>(), x);
  }

  Mat hessian(const Vec& x) const {
    require(2, "hessian");
    return safe_mppi::hessian<double>(ladder_.at<D2>(), x);
  }

  // Closed forms for shipped barriers, used as cross-checks.
  std::function<Vec(const Vec&)> analytic_gradient;
  std::function<Mat(const Vec&)> analytic_hessian;

 private:
  void require(int level, const char* what) const {
    if (depth() < level) {
      throw ValidationError("barrier '" + name_ + "': " + what + " needs more derivative levels");
    }
  }

  std::string name_;
  Ladder<ScalarFnSig> ladder_;
  int relative_degree_ = 1;
};

/// h(x) = |p - c|^2 - r^2 over the planar position entries of x.
inline BarrierFunction circle_barrier(Point2 center, double radius, PositionIndices pos = {}) {
  if (!(radius > 0.0)) throw ValidationError("circle barrier radius must be > 0");
  auto h = [center, radius, pos](const auto& x) {
    using T = typename std::decay_t<decltype(x)>::Scalar;
    const T dx = x(pos.x) - T(center.x);
    const T dy = x(pos.y) - T(center.y);
    return dx * dx + dy * dy - T(radius * radius);
  };
  std::ostringstream name;
  name << "circle(" << center.x << "," << center.y << "," << radius << ")";
  BarrierFunction b = BarrierFunction::from_generic(name.str(), h);
  b.analytic_gradient = [center, pos](const Vec& x) {
    Vec g = Vec::Zero(x.size());
    g(pos.x) = 2.0 * (x(pos.x) - center.x);
    g(pos.y) = 2.0 * (x(pos.y) - center.y);
    return g;
  };
  b.analytic_hessian = [pos](const Vec& x) {
    Mat hess = Mat::Zero(x.size(), x.size());
    hess(pos.x, pos.x) = 2.0;
    hess(pos.y, pos.y) = 2.0;
    return hess;
  };
  return b;
}

/// nu(h) = gain * h.
struct ClassK {
  double gain = 1.0;
  double operator()(double h) const { return gain * h; }
};

namespace detail {

inline HalfspaceConstraint lie_constraint(const BarrierFunction& h, const ControlAffineModel& model,
                                          ClassK alpha, const Vec& x) {
  const Vec grad = h.gradient(x);
  const Vec f = model.drift<double>(x);
  const Mat g = model.actuation<double>(x);
  HalfspaceConstraint c{Vec(g.transpose() * grad), -alpha(h.value(x)) - grad.dot(f)};
  return c;
}

inline void check_degenerate(const HalfspaceConstraint& c, const BarrierFunction& h) {
  if (c.normal.norm() < 1e-9 && c.offset > 0.0) {
    std::ostringstream os;
    os << "degenerate constraint for barrier '" << h.name()
       << "': control cannot influence h here (required increase " << c.offset << ")";
    throw DegenerateConstraint(os.str());
  }
}

}  // namespace detail

/// grad h . g u >= -nu(h) - grad h . f.
inline HalfspaceConstraint vanilla_constraint(const BarrierFunction& h, const ControlAffineModel& model,
                                              ClassK alpha, const Vec& x) {
  HalfspaceConstraint c = detail::lie_constraint(h, model, alpha, x);
  detail::check_degenerate(c, h);
  return c;
}

/// Worst case of grad h . M w over the disturbance hypercube.
inline double robust_tightening(const BarrierFunction& h, const DisturbedModel& model, const Vec& x) {
  const Vec coupling = model.disturbance_matrix.transpose() * h.gradient(x);
  return coupling.cwiseAbs().dot(model.disturbance_bound);
}

inline HalfspaceConstraint robust_constraint(const BarrierFunction& h, const DisturbedModel& model,
                                             ClassK alpha, const Vec& x) {
  HalfspaceConstraint c = detail::lie_constraint(h, model.base, alpha, x);
  c.offset += robust_tightening(h, model, x);
  detail::check_degenerate(c, h);
  return c;
}

/// 0.5 tr(sigma^T Hess(h) sigma), the second-order drift of h along the SDE.
inline double ito_term(const BarrierFunction& h, const StochasticModel& model, const Vec& x) {
  const Mat sigma = model.diffusion(x);
  return 0.5 * (sigma.transpose() * h.hessian(x) * sigma).trace();
}

/// grad h . f + grad h . g u + 0.5 tr(sigma^T Hess(h) sigma) >= -nu(h).
inline HalfspaceConstraint stochastic_constraint(const BarrierFunction& h, const StochasticModel& model,
                                                 ClassK alpha, const Vec& x) {
  HalfspaceConstraint c = detail::lie_constraint(h, model.base, alpha, x);
  c.offset -= ito_term(h, model, x);
  detail::check_degenerate(c, h);
  return c;
}

namespace detail {

// psi(x) = grad h(x) . f(x) + gamma h(x), one derivative level below h.
template <int L>
void set_lie_level(Ladder<ScalarFnSig>& out, const Ladder<ScalarFnSig>& h, const ControlAffineModel& model,
                   double gamma) {
  if constexpr (L + 1 < kLadderLevels) {
    using T = LevelScalarT<L>;
    using TU = LevelScalarT<L + 1>;
    if (!h.has<TU>()) return;
    auto h_t = h.at<T>();
    auto h_up = h.at<TU>();
    out.set<T>([h_t, h_up, model, gamma](const VecX<T>& x) {
      const VecX<T> grad = safe_mppi::gradient<T>(h_up, x);
      const VecX<T> f = model.drift<T>(x);
      T s = T(gamma) * h_t(x);
      for (int i = 0; i < x.size(); ++i) s += grad(i) * f(i);
      return s;
    });
  }
}

inline Ladder<ScalarFnSig> lie_ladder(const Ladder<ScalarFnSig>& h, const ControlAffineModel& model,
                                      double gamma) {
  Ladder<ScalarFnSig> out;
  set_lie_level<0>(out, h, model, gamma);
  set_lie_level<1>(out, h, model, gamma);
  set_lie_level<2>(out, h, model, gamma);
  set_lie_level<3>(out, h, model, gamma);
  return out;
}

inline bool control_appears(const Ladder<ScalarFnSig>& psi, const ControlAffineModel& model,
                            const std::vector<Vec>& samples) {
  for (const Vec& xs : samples) {
    const Vec grad = safe_mppi::gradient<double>(psi.at<D1>(), xs);
    const Mat g = model.actuation<double>(xs);
    for (int j = 0; j < model.input_dim(); ++j) {
      if (std::abs(grad.dot(g.col(j))) > 1e-9) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Uniform states in [-extent, extent]^n from a fixed stream.
inline std::vector<Vec> default_probe_states(int n, int count = 32, double extent = 5.0) {
  GaussianStream stream(0x5eedULL, StreamDomain::kRectifySamples, static_cast<std::uint64_t>(n));
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Vec x(n);
    for (int i = 0; i < n; ++i) x(i) = extent * (2.0 * stream.uniform() - 1.0);
    out.push_back(x);
  }
  return out;
}

inline constexpr int kMaxRelativeDegree = 3;

/// High-order CBF composition: psi_0 = h, psi_{i+1} = grad psi_i . f + gamma_i psi_i,
/// stopping at the first psi whose gradient couples to the input on the probe
/// states. The zero-superlevel set of the result lies inside that of h.
inline BarrierFunction rectify_relative_degree(const BarrierFunction& h, const ControlAffineModel& model,
                                               std::vector<double> gains,
                                               std::vector<Vec> sample_states = {}) {
  if (sample_states.empty()) sample_states = default_probe_states(model.state_dim());
  for (double g : gains) {
    if (!(g > 0.0)) throw ValidationError("rectification gains must be > 0");
  }
  Ladder<ScalarFnSig> psi = h.ladder();
  for (int degree = 1; degree <= kMaxRelativeDegree; ++degree) {
    if (psi.depth() < 1) break;
    if (detail::control_appears(psi, model, sample_states)) {
      if (degree == 1) return h;
      std::ostringstream name;
      name << "rectified[" << degree << "](" << h.name() << ")";
      return BarrierFunction::from_ladder(name.str(), psi, degree);
    }
    if (degree == kMaxRelativeDegree) break;
    const std::size_t gi = static_cast<std::size_t>(degree - 1);
    const double gamma = gi < gains.size() ? gains[gi] : (gains.empty() ? 1.0 : gains.back());
    psi = detail::lie_ladder(psi, model, gamma);
  }
  throw RelativeDegreeTooHigh("barrier '" + h.name() + "': control does not appear within " +
                              std::to_string(kMaxRelativeDegree) + " differentiations");
}

enum class FilterVariant { kNone, kVanilla, kRobust, kStochastic };

inline std::string to_string(FilterVariant v) {
  switch (v) {
    case FilterVariant::kNone: return "none";
    case FilterVariant::kVanilla: return "vanilla";
    case FilterVariant::kRobust: return "robust";
    case FilterVariant::kStochastic: return "stochastic";
  }
  return "?";
}

/// The model views each filter variant needs.
struct FilterModel {
  ControlAffineModel base;
  std::optional<DisturbedModel> disturbed;
  std::optional<StochasticModel> stochastic;
};

inline std::vector<HalfspaceConstraint> assemble_constraints(const StateVector& x,
                                                             const std::vector<BarrierFunction>& barriers,
                                                             const FilterModel& model, FilterVariant variant,
                                                             ClassK alpha) {
  std::vector<HalfspaceConstraint> out;
  out.reserve(barriers.size());
  for (const auto& h : barriers) {
    switch (variant) {
      case FilterVariant::kNone:
        break;
      case FilterVariant::kVanilla:
        out.push_back(vanilla_constraint(h, model.base, alpha, x));
        break;
      case FilterVariant::kRobust:
        if (!model.disturbed) throw ValidationError("robust filter needs a disturbed model");
        out.push_back(robust_constraint(h, *model.disturbed, alpha, x));
        break;
      case FilterVariant::kStochastic:
        if (!model.stochastic) throw ValidationError("stochastic filter needs a stochastic model");
        out.push_back(stochastic_constraint(h, *model.stochastic, alpha, x));
        break;
    }
  }
  return out;
}

/// Closest control to u_nom satisfying every barrier constraint at x and the
/// input box. Throws InfeasibleError or DegenerateConstraint; never relaxes.
inline ControlVector filter(const ControlVector& u_nom, const StateVector& x,
                            const std::vector<BarrierFunction>& barriers, const FilterModel& model,
                            FilterVariant variant, ClassK alpha) {
  if (variant == FilterVariant::kNone) return u_nom;
  QpSpec spec{u_nom, assemble_constraints(x, barriers, model, variant, alpha), model.base.input_bounds()};
  return solve_qp(spec);
}

}  // namespace safe_mppi
