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

// Minimum-distance projection QP used by the safety filter:
//
//   minimize 0.5 |u - u_ref|^2  subject to  a_i^T u >= b_i,  lo <= u <= hi.
//
// Solved with the Goldfarb-Idnani dual active-set method specialised to an
// identity Hessian. It starts at the unconstrained optimum u_ref and adds the
// most violated constraint until none is violated, so a feasible reference
// is returned untouched. A violated constraint that can be neither reached
// nor traded against the active set is a certificate of infeasibility.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "safe_mppi/dynamics.hpp"
#include "safe_mppi/errors.hpp"

namespace safe_mppi {

/// normal^T u >= offset.
struct HalfspaceConstraint {
  Vec normal;
  double offset = 0.0;

  double slack(const Vec& u) const { return normal.dot(u) - offset; }
};

struct QpSpec {
  ControlVector reference;
  std::vector<HalfspaceConstraint> constraints;
  InputBounds box;
};

struct QpSolution {
  ControlVector u;
  /// Multipliers of spec.constraints followed by the box rows
  /// (u_i >= lo_i for each i, then -u_i >= -hi_i).
  std::vector<double> multipliers;
  int iterations = 0;
};

struct QpOptions {
  double feasibility_tol = 1e-12;
  int max_iterations = 100;
};

namespace detail {

inline std::vector<HalfspaceConstraint> expand_box(const QpSpec& spec) {
  std::vector<HalfspaceConstraint> rows = spec.constraints;
  const int m = static_cast<int>(spec.reference.size());
  for (int i = 0; i < m; ++i) {
    if (std::isfinite(spec.box.lower(i))) rows.push_back({Vec::Unit(m, i), spec.box.lower(i)});
    else rows.push_back({Vec::Zero(m), -std::numeric_limits<double>::infinity()});
  }
  for (int i = 0; i < m; ++i) {
    if (std::isfinite(spec.box.upper(i))) rows.push_back({-Vec::Unit(m, i), -spec.box.upper(i)});
    else rows.push_back({Vec::Zero(m), -std::numeric_limits<double>::infinity()});
  }
  return rows;
}

}  // namespace detail

inline QpSolution solve_qp_detailed(const QpSpec& spec, const QpOptions& opts = {}) {
  const int m = static_cast<int>(spec.reference.size());
  if (spec.box.dim() != m) throw ValidationError("qp: box dimension mismatch");
  spec.box.validate();
  for (const auto& c : spec.constraints) {
    if (c.normal.size() != m) throw ValidationError("qp: constraint dimension mismatch");
    if (!c.normal.allFinite() || !std::isfinite(c.offset)) throw ValidationError("qp: non-finite constraint");
  }
  const std::vector<HalfspaceConstraint> rows = detail::expand_box(spec);
  const int total = static_cast<int>(rows.size());

  QpSolution sol;
  sol.u = spec.reference;
  sol.multipliers.assign(static_cast<std::size_t>(total), 0.0);
  std::vector<int> active;
  std::vector<char> is_active(static_cast<std::size_t>(total), 0);

  for (int iter = 0;; ++iter) {
    if (iter >= opts.max_iterations) throw Error("qp: iteration cap reached");
    sol.iterations = iter;

    // Most violated inactive constraint.
    int p = -1;
    double worst = -opts.feasibility_tol;
    for (int j = 0; j < total; ++j) {
      if (is_active[static_cast<std::size_t>(j)]) continue;
      const double s = rows[static_cast<std::size_t>(j)].slack(sol.u);
      if (s < worst) {
        worst = s;
        p = j;
      }
    }
    if (p < 0) return sol;

    const Vec& np = rows[static_cast<std::size_t>(p)].normal;
    double lambda_p = 0.0;
    for (int inner = 0;; ++inner) {
      if (inner > opts.max_iterations) throw Error("qp: inner iteration cap reached");
      const int q = static_cast<int>(active.size());
      Vec z = np;
      Eigen::VectorXd r;
      if (q > 0) {
        Eigen::MatrixXd basis(m, q);
        for (int i = 0; i < q; ++i) basis.col(i) = rows[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])].normal;
        r = (basis.transpose() * basis).ldlt().solve(basis.transpose() * Eigen::VectorXd(np));
        z = np - Vec(basis * r);
      }
      // Dual step limit: first active multiplier driven to zero.
      double t1 = std::numeric_limits<double>::infinity();
      int drop = -1;
      for (int i = 0; i < q; ++i) {
        if (r(i) > 1e-12) {
          const double ratio = sol.multipliers[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])] / r(i);
          if (ratio < t1) {
            t1 = ratio;
            drop = i;
          }
        }
      }
      // Primal step that makes constraint p active.
      double t2 = std::numeric_limits<double>::infinity();
      const double zz = z.squaredNorm();
      if (zz > 1e-20 * std::max(1.0, np.squaredNorm())) {
        t2 = -rows[static_cast<std::size_t>(p)].slack(sol.u) / z.dot(np);
      }
      if (!std::isfinite(t1) && !std::isfinite(t2)) {
        std::ostringstream os;
        os << "filter infeasible: constraint " << p << " (slack " << rows[static_cast<std::size_t>(p)].slack(sol.u)
           << ") cannot be satisfied together with the active set";
        throw InfeasibleError(os.str(), p);
      }
      const double t = std::min(t1, t2);
      if (std::isfinite(t2)) sol.u += t * z;
      for (int i = 0; i < q; ++i) {
        sol.multipliers[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])] -= t * r(i);
      }
      lambda_p += t;
      sol.multipliers[static_cast<std::size_t>(p)] = lambda_p;
      if (t2 <= t1) {
        active.push_back(p);
        is_active[static_cast<std::size_t>(p)] = 1;
        break;
      }
      const int removed = active[static_cast<std::size_t>(drop)];
      sol.multipliers[static_cast<std::size_t>(removed)] = 0.0;
      is_active[static_cast<std::size_t>(removed)] = 0;
      active.erase(active.begin() + drop);
    }
  }
}

/// Unique minimiser of 0.5 |u - u_ref|^2 over the constraint set.
inline ControlVector solve_qp(const QpSpec& spec, const QpOptions& opts = {}) {
  return solve_qp_detailed(spec, opts).u;
}

/// Max of stationarity, primal, dual and complementarity violations.
inline double kkt_residual(const QpSpec& spec, const QpSolution& sol) {
  const std::vector<HalfspaceConstraint> rows = detail::expand_box(spec);
  Vec stationarity = sol.u - spec.reference;
  double worst = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double lambda = sol.multipliers[i];
    if (!std::isfinite(rows[i].offset)) continue;
    stationarity -= lambda * rows[i].normal;
    const double s = rows[i].slack(sol.u);
    worst = std::max(worst, std::max(0.0, -s));
    worst = std::max(worst, std::max(0.0, -lambda));
    worst = std::max(worst, std::abs(lambda * s));
  }
  return std::max(worst, stationarity.cwiseAbs().maxCoeff());
}

}  // namespace safe_mppi
