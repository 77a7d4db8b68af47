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

// Closed-loop engine: sensor -> estimator -> MPPI planner (or a proportional
// controller) -> CBF safety filter -> plant integration, repeated every dt.
// The planner always predicts with the deterministic model; a stochastic
// plant is integrated with Euler-Maruyama using the true diffusion.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "safe_mppi/cbf.hpp"
#include "safe_mppi/dynamics.hpp"
#include "safe_mppi/errors.hpp"
#include "safe_mppi/estimation.hpp"
#include "safe_mppi/mppi.hpp"
#include "safe_mppi/random.hpp"
#include "safe_mppi/reach_avoid.hpp"

namespace safe_mppi {

enum class NominalController { kMppiFirstControl, kProportionalToGoal };
enum class EstimatorKind { kNone, kEkf, kUkf };

struct ProportionalGains {
  double gain = 1.0;          // position error -> velocity
  double heading_gain = 2.0;  // unicycle heading error -> omega
  double speed_gain = 2.0;    // unicycle speed error -> acceleration
  double max_speed = 2.0;     // unicycle speed command cap
};

struct CircleSpec {
  Point2 center;
  double radius = 0.5;
};

struct FilterConfig {
  FilterVariant variant = FilterVariant::kNone;
  double gamma = 1.0;
  /// Circles whose barrier values are recorded and, unless variant is none,
  /// enforced.
  std::vector<CircleSpec> barriers;
  /// Extra radius added to every enforced circle; recorded values use the
  /// declared radius.
  double margin = 0.0;
  /// Class-K gains for relative-degree rectification.
  std::vector<double> rectify_gains{1.0};
};

struct DisturbanceConfig {
  Mat matrix;
  Vec bound;
};

struct Scenario {
  int spec_version = 1;
  std::string name = "scenario";
  std::string model_id;
  ControlAffineModel model;
  StateVector initial_state;
  double duration = 1.0;
  double dt = 0.05;
  Scheme integrator = Scheme::kEuler;
  double plant_noise = 0.0;  // sigma = plant_noise * I on every state channel
  std::optional<DisturbanceConfig> disturbance;
  TaskSet tasks;
  std::optional<MppiConfig> planner;
  NominalController nominal = NominalController::kMppiFirstControl;
  ProportionalGains proportional;
  FilterConfig filter;
  EstimatorKind estimator = EstimatorKind::kNone;
  SensorModel sensor;
  Mat initial_covariance;            // estimator prior, defaults to 1e-4 I
  std::optional<Mat> process_noise;  // estimator Q, defaults to sigma sigma^T dt
  std::uint64_t seed = 0;

  int steps() const { return static_cast<int>(std::lround(duration / dt)); }
  int state_dim() const { return model.state_dim(); }
  int input_dim() const { return model.input_dim(); }

  void validate() const {
    if (!(duration > 0.0)) throw ValidationError("duration must be > 0");
    if (!(dt > 0.0)) throw ValidationError("dt must be > 0");
    if (std::abs(duration / dt - std::round(duration / dt)) > 1e-9 * std::max(1.0, duration / dt)) {
      throw ValidationError("duration must be an integer multiple of dt");
    }
    const int n = model.state_dim();
    if (n == 0) throw ValidationError("scenario has no model");
    if (initial_state.size() != n) throw ValidationError("initial_state length must equal model state dimension");
    if (!initial_state.allFinite()) throw ValidationError("initial_state must be finite");
    if (integrator == Scheme::kEulerMaruyama) {
      throw ValidationError("integrator must be euler or rk4; stochastic plants are set with plant_noise");
    }
    if (plant_noise < 0.0) throw ValidationError("plant_noise must be >= 0");
    if (plant_noise > 0.0 && disturbance) throw ValidationError("plant_noise and disturbance are exclusive");
    if ((plant_noise > 0.0 || disturbance) && integrator != Scheme::kEuler) {
      throw ValidationError("noisy or disturbed plants use the euler integrator");
    }
    if (disturbance) {
      DisturbedModel dm{model, disturbance->matrix, disturbance->bound};
      dm.validate();
    }
    tasks.validate();
    if (planner) {
      planner->validate();
      if (planner->input_dim() != model.input_dim()) throw ValidationError("planner noise dimension != m");
    }
    if (nominal == NominalController::kMppiFirstControl && !planner) {
      throw ValidationError("nominal controller mppi_first_control needs a planner");
    }
    if (nominal == NominalController::kProportionalToGoal) {
      if (tasks.goals.empty()) throw ValidationError("proportional controller needs a goal");
      if (model_id != "single_integrator_2d" && model_id != "extended_unicycle") {
        throw ValidationError("proportional controller supports single_integrator_2d and extended_unicycle");
      }
    }
    if (!(filter.gamma > 0.0)) throw ValidationError("filter gamma must be > 0");
    if (!(filter.margin >= 0.0)) throw ValidationError("filter margin must be >= 0");
    for (const auto& b : filter.barriers) {
      if (!(b.radius > 0.0)) throw ValidationError("barrier radius must be > 0");
    }
    if (filter.variant == FilterVariant::kStochastic && !(plant_noise > 0.0)) {
      throw ValidationError("stochastic filter needs plant_noise > 0");
    }
    if (filter.variant == FilterVariant::kRobust && !disturbance) {
      throw ValidationError("robust filter needs a disturbance block");
    }
    sensor.validate(n);
    if (estimator == EstimatorKind::kNone) {
      if (sensor.observation_matrix.rows() != n || !sensor.observation_matrix.isIdentity(0.0)) {
        throw ValidationError("estimator none requires full-state sensing (C = I)");
      }
    }
    if (initial_covariance.size() != 0 && (initial_covariance.rows() != n || initial_covariance.cols() != n)) {
      throw ValidationError("initial_covariance must be n x n");
    }
    if (process_noise && (process_noise->rows() != n || process_noise->cols() != n)) {
      throw ValidationError("process_noise must be n x n");
    }
  }
};

struct SimEvent {
  int step = 0;
  double time = 0.0;
  std::string kind;  // "infeasible", "diverged", "estimator"
  std::string detail;
};

struct SimTrace {
  int state_dim = 0;
  int input_dim = 0;
  std::vector<double> time;
  std::vector<Vec> state;
  std::vector<Vec> estimate;
  std::vector<Vec> measurement;
  std::vector<Vec> nominal_control;
  std::vector<Vec> control;
  std::vector<std::vector<double>> barrier_values;  // per step, per barrier
  std::vector<std::vector<double>> task_costs;      // per step: goals then obstacles
  std::vector<double> planner_cost;                 // NaN without a planner
  std::vector<std::vector<std::string>> step_events;
  std::vector<SimEvent> events;
  bool diverged = false;

  int size() const { return static_cast<int>(time.size()); }
};

struct GoalMetrics {
  std::optional<double> first_entry_time;
  bool in_window = false;
};

struct Metrics {
  std::vector<GoalMetrics> goals;
  double min_clearance = std::numeric_limits<double>::infinity();
  double min_barrier = std::numeric_limits<double>::infinity();
  double terminal_goal_distance = std::numeric_limits<double>::quiet_NaN();
  int infeasible_steps = 0;
  bool diverged = false;
  int steps = 0;
};

/// Per sampling iteration callback: (control step, batch, weights).
using RolloutDump = std::function<void(int step, const RolloutBatch&, const std::vector<double>&)>;

struct RunOptions {
  int workers = 1;
  std::optional<int> samples_override;
  RolloutDump rollout_dump;
};

namespace detail {

inline double wrap_angle(double a) {
  return std::remainder(a, 2.0 * std::numbers::pi);
}

/// First goal not yet entered whose window is still open, else the last goal.
inline const GoalTask& active_goal(const TaskSet& tasks, const HistoryBuffer& history, double now,
                                   PositionIndices pos) {
  for (const auto& g : tasks.goals) {
    if (g.window && g.window->t2 < now) continue;
    bool reached = false;
    for (int k = 0; k < history.size() && !reached; ++k) {
      const double t = history.time_at(k);
      if (g.window && (t < g.window->t1 || t > g.window->t2)) continue;
      reached = goal_stage_cost(g, history.state(k), pos, t) <= 0.0;
    }
    if (!reached) return g;
  }
  return tasks.goals.back();
}

inline ControlVector proportional_control(const Scenario& sc, const StateVector& x, const GoalTask& goal, double now) {
  const Point2 target = goal.position_at(now);
  const ProportionalGains& k = sc.proportional;
  if (sc.model_id == "single_integrator_2d") {
    Vec u(2);
    u << k.gain * (target.x - x(0)), k.gain * (target.y - x(1));
    return sc.model.input_bounds().clamp(u);
  }
  const double ex = target.x - x(0);
  const double ey = target.y - x(1);
  const double dist = std::sqrt(ex * ex + ey * ey);
  const double heading_error = wrap_angle(std::atan2(ey, ex) - x(2));
  const double v_des = std::clamp(k.gain * dist * std::cos(heading_error), 0.0, k.max_speed);
  Vec u(2);
  u << k.speed_gain * (v_des - x(3)), k.heading_gain * heading_error;
  return sc.model.input_bounds().clamp(u);
}

}  // namespace detail

/// Runs the scenario for duration/dt steps (duration/dt + 1 trace rows).
inline SimTrace run_closed_loop(const Scenario& sc, std::uint64_t seed, const RunOptions& opts = {}) {
  sc.validate();
  const int n = sc.state_dim();
  const int m = sc.input_dim();
  const int steps = sc.steps();
  const PositionIndices pos = sc.model.position();

  const DiscreteDynamics nominal_dyn(sc.model, sc.dt, sc.integrator);
  std::optional<StochasticModel> sde;
  std::optional<DisturbedModel> disturbed;
  std::optional<DiscreteDynamics> plant;
  if (sc.plant_noise > 0.0) {
    sde = StochasticModel::constant_isotropic(sc.model, sc.plant_noise);
    plant.emplace(*sde, sc.dt, Scheme::kEulerMaruyama);
  } else if (sc.disturbance) {
    disturbed = DisturbedModel{sc.model, sc.disturbance->matrix, sc.disturbance->bound};
    plant.emplace(*disturbed, sc.dt, Scheme::kEuler);
  } else {
    plant.emplace(nominal_dyn);
  }

  std::vector<BarrierFunction> recorded;
  std::vector<BarrierFunction> enforced;
  for (const auto& c : sc.filter.barriers) {
    recorded.push_back(circle_barrier(c.center, c.radius, pos));
    if (sc.filter.variant != FilterVariant::kNone) {
      enforced.push_back(rectify_relative_degree(circle_barrier(c.center, c.radius + sc.filter.margin, pos),
                                                 sc.model, sc.filter.rectify_gains));
    }
  }
  const FilterModel filter_model{sc.model, disturbed, sde};

  std::optional<MppiPlanner> planner;
  if (sc.planner && sc.nominal == NominalController::kMppiFirstControl) {
    MppiConfig cfg = *sc.planner;
    cfg.seed = seed;
    cfg.workers = opts.workers;
    if (opts.samples_override) cfg.samples = *opts.samples_override;
    planner.emplace(cfg, nominal_dyn);
  }

  SensorModel sensor = sc.sensor;
  sensor.seed = seed;
  const Mat prior_cov = sc.initial_covariance.size() ? sc.initial_covariance : Mat(1e-4 * Mat::Identity(n, n));
  GaussianBelief belief{sc.initial_state, prior_cov};

  SimTrace trace;
  trace.state_dim = n;
  trace.input_dim = m;
  HistoryBuffer history(sc.dt, 0.0);
  StateVector x = sc.initial_state;
  ControlVector last_u = ControlVector::Zero(m);
  std::vector<std::string> est_events;

  for (int k = 0; k <= steps; ++k) {
    const double now = k * sc.dt;
    std::vector<std::string> step_events;
    auto log_event = [&](const std::string& kind, const std::string& detail) {
      step_events.push_back(kind);
      trace.events.push_back({k, now, kind, detail});
    };

    GaussianStream sensor_noise(seed, StreamDomain::kSensorNoise, static_cast<std::uint64_t>(k));
    const Vec y = sense(sensor, x, sensor_noise);

    Vec xhat;
    est_events.clear();
    if (sc.estimator == EstimatorKind::kNone) {
      xhat = y;
    } else {
      const Mat q = sc.process_noise ? *sc.process_noise
                    : sde       ? sde_process_noise(*sde, belief.mean, sc.dt)
                                : Mat(1e-9 * Mat::Identity(n, n));
      if (sc.estimator == EstimatorKind::kEkf) {
        if (k > 0) belief = ekf_predict(belief, nominal_dyn, last_u, q, &est_events);
        belief = ekf_update(belief, sensor, y, &est_events);
      } else {
        if (k > 0) belief = ukf_predict(belief, nominal_dyn, last_u, q, {}, &est_events);
        belief = ukf_update(belief, sensor, y, {}, &est_events);
      }
      xhat = belief.mean;
      for (const auto& e : est_events) log_event("estimator", e);
    }

    ControlVector u_nom(m);
    double planner_cost = std::numeric_limits<double>::quiet_NaN();
    std::string diverged_detail;
    if (planner) {
      BatchObserver observer;
      if (opts.rollout_dump) {
        observer = [&](const RolloutBatch& b, const std::vector<double>& w) { opts.rollout_dump(k, b, w); };
      }
      try {
        const MppiSolution& sol = planner->plan(xhat, sc.tasks, history, now, observer);
        u_nom = sol.mean.at(0);
        planner_cost = sol.nominal_cost;
      } catch (const NoFeasibleRollout& e) {
        u_nom = ControlVector::Zero(m);
        diverged_detail = e.what();
        log_event("diverged", diverged_detail);
      }
    } else {
      u_nom = detail::proportional_control(sc, xhat, detail::active_goal(sc.tasks, history, now, pos), now);
    }

    ControlVector u = u_nom;
    if (sc.filter.variant != FilterVariant::kNone) {
      try {
        u = filter(u_nom, xhat, enforced, filter_model, sc.filter.variant, ClassK{sc.filter.gamma});
      } catch (const InfeasibleError& e) {
        u = sc.model.input_bounds().clamp(ControlVector::Zero(m));
        log_event("infeasible", e.what());
      } catch (const DegenerateConstraint& e) {
        u = sc.model.input_bounds().clamp(ControlVector::Zero(m));
        log_event("infeasible", e.what());
      }
    }

    std::vector<double> hv;
    hv.reserve(recorded.size());
    for (const auto& b : recorded) hv.push_back(b.value(x));
    std::vector<double> costs;
    for (const auto& g : sc.tasks.goals) costs.push_back(goal_stage_cost(g, xhat, pos, now));
    for (const auto& o : sc.tasks.avoids) costs.push_back(obstacle_stage_cost(o, xhat, pos));

    StateVector next = x;
    if (k < steps && diverged_detail.empty()) {
      try {
        if (sde) {
          GaussianStream plant_noise(seed, StreamDomain::kPlantNoise, static_cast<std::uint64_t>(k));
          next = step_euler_maruyama(*plant, x, u, plant_noise);
        } else if (disturbed) {
          GaussianStream draw(seed, StreamDomain::kDisturbance, static_cast<std::uint64_t>(k));
          Vec w(disturbed->disturbance_bound.size());
          for (int i = 0; i < w.size(); ++i) w(i) = disturbed->disturbance_bound(i) * (2.0 * draw.uniform() - 1.0);
          next = disturbed_step(*plant, x, u, w);
        } else {
          next = step(*plant, x, u);
        }
      } catch (const DivergenceError& e) {
        diverged_detail = e.what();
        log_event("diverged", diverged_detail);
      }
    }

    trace.time.push_back(now);
    trace.state.push_back(x);
    trace.estimate.push_back(xhat);
    trace.measurement.push_back(y);
    trace.nominal_control.push_back(u_nom);
    trace.control.push_back(u);
    trace.barrier_values.push_back(std::move(hv));
    trace.task_costs.push_back(std::move(costs));
    trace.planner_cost.push_back(planner_cost);
    trace.step_events.push_back(std::move(step_events));

    history.append(xhat);
    last_u = u;
    if (!diverged_detail.empty()) {
      trace.diverged = true;
      break;
    }
    x = next;
  }
  return trace;
}

/// Deterministic reduction of a trace; goal entry and clearance use true states.
inline Metrics evaluate_metrics(const SimTrace& trace, const Scenario& sc) {
  Metrics out;
  out.steps = trace.size();
  out.diverged = trace.diverged;
  const PositionIndices pos = sc.model.position();
  out.goals.resize(sc.tasks.goals.size());
  for (std::size_t gi = 0; gi < sc.tasks.goals.size(); ++gi) {
    const GoalTask& g = sc.tasks.goals[gi];
    for (int k = 0; k < trace.size(); ++k) {
      const double t = trace.time[static_cast<std::size_t>(k)];
      if (goal_stage_cost(g, trace.state[static_cast<std::size_t>(k)], pos, t) > 0.0) continue;
      if (!out.goals[gi].first_entry_time) out.goals[gi].first_entry_time = t;
      const bool inside_window = !g.window || (t >= g.window->t1 - 1e-9 && t <= g.window->t2 + 1e-9);
      if (inside_window) out.goals[gi].in_window = true;
    }
  }
  for (int k = 0; k < trace.size(); ++k) {
    const Point2 p = position_of(trace.state[static_cast<std::size_t>(k)], pos);
    for (const auto& o : sc.tasks.avoids) {
      out.min_clearance = std::min(out.min_clearance, distance(p, o.position) - o.physical_radius);
    }
    for (double h : trace.barrier_values[static_cast<std::size_t>(k)]) out.min_barrier = std::min(out.min_barrier, h);
    for (const auto& e : trace.step_events[static_cast<std::size_t>(k)]) out.infeasible_steps += e == "infeasible";
  }
  if (!sc.tasks.goals.empty() && trace.size() > 0) {
    const GoalTask& last = sc.tasks.goals.back();
    out.terminal_goal_distance =
        distance(position_of(trace.state.back(), pos), last.position_at(trace.time.back()));
  }
  return out;
}

struct ComparisonRow {
  std::string method;
  std::uint64_t seed = 0;
  Metrics metrics;
};

/// Runs every scenario on every seed; rows are ordered scenario-major.
inline std::vector<ComparisonRow> compare_runs(const std::vector<Scenario>& scenarios,
                                               const std::vector<std::uint64_t>& seeds, const RunOptions& opts = {}) {
  if (scenarios.empty()) throw ValidationError("compare needs at least one scenario");
  for (const auto& sc : scenarios) {
    sc.validate();
    if (sc.state_dim() != scenarios.front().state_dim() || sc.input_dim() != scenarios.front().input_dim()) {
      throw ValidationError("compared scenarios must share model dimensions ('" + sc.name + "' differs from '" +
                            scenarios.front().name + "')");
    }
  }
  std::vector<ComparisonRow> rows;
  for (const auto& sc : scenarios) {
    for (std::uint64_t seed : seeds) {
      rows.push_back({sc.name, seed, evaluate_metrics(run_closed_loop(sc, seed, opts), sc)});
    }
  }
  return rows;
}

/// Round-trip exact text for doubles.
inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// time, x..., xhat..., u_nom..., u..., h_1..., events
inline void write_trace_csv(std::ostream& os, const SimTrace& trace) {
  os << "time";
  for (int i = 0; i < trace.state_dim; ++i) os << ",x" << i;
  for (int i = 0; i < trace.state_dim; ++i) os << ",xhat" << i;
  for (int i = 0; i < trace.input_dim; ++i) os << ",u_nom" << i;
  for (int i = 0; i < trace.input_dim; ++i) os << ",u" << i;
  const std::size_t nb = trace.barrier_values.empty() ? 0 : trace.barrier_values.front().size();
  for (std::size_t i = 0; i < nb; ++i) os << ",h_" << (i + 1);
  os << ",events\n";
  for (int k = 0; k < trace.size(); ++k) {
    const auto uk = static_cast<std::size_t>(k);
    os << format_double(trace.time[uk]);
    for (int i = 0; i < trace.state_dim; ++i) os << ',' << format_double(trace.state[uk](i));
    for (int i = 0; i < trace.state_dim; ++i) os << ',' << format_double(trace.estimate[uk](i));
    for (int i = 0; i < trace.input_dim; ++i) os << ',' << format_double(trace.nominal_control[uk](i));
    for (int i = 0; i < trace.input_dim; ++i) os << ',' << format_double(trace.control[uk](i));
    for (double h : trace.barrier_values[uk]) os << ',' << format_double(h);
    os << ',';
    for (std::size_t e = 0; e < trace.step_events[uk].size(); ++e) {
      if (e) os << ';';
      os << trace.step_events[uk][e];
    }
    os << '\n';
  }
}

/// One row per (sample, time index): sample,weight,cost,t,x0..x{n-1}.
/// `max_samples` <= 0 writes all samples.
inline void write_rollout_csv(std::ostream& os, const RolloutBatch& batch, const std::vector<double>& weights,
                              int max_samples = 0) {
  const int n = batch.state_dim;
  const int steps = batch.noises.horizon + 1;
  const int samples = static_cast<int>(batch.costs.size());
  const int count = max_samples > 0 ? std::min(max_samples, samples) : samples;
  os << "sample,weight,cost,t";
  for (int i = 0; i < n; ++i) os << ",x" << i;
  os << '\n';
  for (int s = 0; s < count; ++s) {
    const double* base = batch.states.data() + static_cast<std::ptrdiff_t>(s) * steps * n;
    const std::string prefix = std::to_string(s) + ',' + format_double(weights[static_cast<std::size_t>(s)]) + ',' +
                               format_double(batch.costs[static_cast<std::size_t>(s)]) + ',';
    for (int t = 0; t < steps; ++t) {
      os << prefix << t;
      for (int i = 0; i < n; ++i) os << ',' << format_double(base[t * n + i]);
      os << '\n';
    }
  }
}

}  // namespace safe_mppi
