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

// Timed reach-avoid cost functionals. Goal tasks are scored by a quadratic
// distance-to-disk stage cost and, when they carry a time window, by the
// minimum of that cost over the window; avoid tasks are scored by an inverse
// distance. Windows that reach into the past are read from the recorded
// history so an already satisfied goal is not revisited.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "safe_mppi/dynamics.hpp"
#include "safe_mppi/errors.hpp"

namespace safe_mppi {

/// Global-time interval [t1, t2] in seconds.
struct TimeWindow {
  double t1 = 0.0;
  double t2 = 0.0;
};

struct GoalTask {
  Point2 position;
  /// Optional moving goal; overrides `position` when set.
  std::function<Point2(double)> trajectory;
  double radius = 0.5;
  double gain = 1.0;
  std::optional<TimeWindow> window;

  Point2 position_at(double t) const { return trajectory ? trajectory(t) : position; }

  void validate() const {
    if (!(radius > 0.0)) throw ValidationError("goal radius must be > 0");
    if (!(gain > 0.0)) throw ValidationError("goal gain must be > 0");
    if (window && !(window->t1 < window->t2)) throw ValidationError("goal window needs t1 < t2");
  }
};

struct AvoidTask {
  Point2 position;
  double physical_radius = 0.0;
  double gain = 1.0;
  double epsilon = 0.01;

  void validate() const {
    if (!(gain > 0.0)) throw ValidationError("obstacle gain must be > 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("obstacle epsilon must be in (0,1)");
    if (!(physical_radius >= 0.0)) throw ValidationError("obstacle radius must be >= 0");
  }
};

/// kMinOfCosts combines terms with min and scores obstacles by -max;
/// kPenaltySum adds goal costs and positive obstacle penalties.
enum class CostCombination { kMinOfCosts, kPenaltySum };

struct TaskSet {
  std::vector<GoalTask> goals;
  std::vector<AvoidTask> avoids;
  CostCombination combination = CostCombination::kPenaltySum;

  bool empty() const { return goals.empty() && avoids.empty(); }
  bool has_windows() const {
    return std::any_of(goals.begin(), goals.end(), [](const GoalTask& g) { return g.window.has_value(); });
  }
  void validate() const {
    if (empty()) throw ValidationError("task set must contain at least one task");
    for (const auto& g : goals) g.validate();
    for (const auto& o : avoids) o.validate();
  }
};

/// Append-only record of past states; states[k] is at start_time + k*dt.
class HistoryBuffer {
 public:
  HistoryBuffer(double dt, double start_time = 0.0) : dt_(dt), start_time_(start_time) {
    if (!(dt > 0.0)) throw ValidationError("history dt must be > 0");
  }

  void append(const StateVector& x) { states_.push_back(x); }
  int size() const { return static_cast<int>(states_.size()); }
  const StateVector& state(int k) const { return states_.at(static_cast<std::size_t>(k)); }
  double time_at(int k) const { return start_time_ + k * dt_; }
  double dt() const { return dt_; }
  double start_time() const { return start_time_; }

 private:
  double dt_;
  double start_time_;
  std::vector<StateVector> states_;
};

/// Read-only (H+1) x n rollout stored row-major.
struct RolloutView {
  const double* data = nullptr;
  int steps = 0;  // H + 1
  int n = 0;
  PositionIndices pos;

  Point2 position(int k) const {
    const double* row = data + static_cast<std::ptrdiff_t>(k) * n;
    return {row[pos.x], row[pos.y]};
  }
};

inline Point2 position_of(const StateVector& x, PositionIndices pos) { return {x(pos.x), x(pos.y)}; }

/// k_g (|p - p_g(t)|^2 - r_g^2); negative strictly inside the goal disk.
inline double goal_stage_cost(const GoalTask& task, Point2 p, double t) {
  const Point2 g = task.position_at(t);
  const double dx = p.x - g.x;
  const double dy = p.y - g.y;
  return task.gain * (dx * dx + dy * dy - task.radius * task.radius);
}

inline double goal_stage_cost(const GoalTask& task, const StateVector& x, PositionIndices pos,
                              double t) {
  return goal_stage_cost(task, position_of(x, pos), t);
}

/// k_o / max(|p - p_o|, eps).
inline double obstacle_stage_cost(const AvoidTask& task, Point2 p) {
  return task.gain / std::max(distance(p, task.position), task.epsilon);
}

inline double obstacle_stage_cost(const AvoidTask& task, const StateVector& x, PositionIndices pos) {
  return obstacle_stage_cost(task, position_of(x, pos));
}

/// Window samples split into history indices (times before `now`) and
/// prediction offsets 0..H (times at or after `now`).
struct WindowIndices {
  std::vector<int> history;
  std::vector<int> prediction;

  /// True when the window lies entirely beyond the planning horizon.
  bool unreachable() const { return history.empty() && prediction.empty(); }
};

/// Window endpoints snap to the dt grid: t1 rounds up, t2 rounds down.
inline WindowIndices window_to_indices(TimeWindow window, double now, const HistoryBuffer& history,
                                       int horizon, double dt) {
  if (!(window.t1 < window.t2)) throw ValidationError("window needs t1 < t2");
  constexpr double kSnap = 1e-9;
  const double start = history.start_time();
  const long first = static_cast<long>(std::ceil((window.t1 - start) / dt - kSnap));
  const long last = static_cast<long>(std::floor((window.t2 - start) / dt + kSnap));
  const long current = std::lround((now - start) / dt);

  WindowIndices out;
  const long history_end = std::min<long>(current, history.size());  // exclusive
  for (long i = std::max<long>(first, 0); i <= last && i < history_end; ++i) {
    out.history.push_back(static_cast<int>(i));
  }
  for (long i = std::max(first, current); i <= last && i <= current + horizon; ++i) {
    out.prediction.push_back(static_cast<int>(i - current));
  }
  return out;
}

/// Precomputed per-cycle view of a task set. Everything that depends only on
/// the frozen history is resolved once so scoring a rollout is a tight loop.
class TaskCostEvaluator {
 public:
  TaskCostEvaluator(const TaskSet& tasks, const HistoryBuffer& history, double now, int horizon,
                    double dt, PositionIndices pos)
      : tasks_(&tasks), now_(now), dt_(dt), horizon_(horizon), pos_(pos) {
    all_time_invariant_ = !tasks.has_windows();
    goals_.reserve(tasks.goals.size());
    for (const auto& g : tasks.goals) {
      PreparedGoal pg;
      if (!g.window) {
        pg.kind = GoalKind::kTimeInvariant;
      } else {
        WindowIndices idx = window_to_indices(*g.window, now, history, horizon, dt);
        pg.history_min = std::numeric_limits<double>::infinity();
        for (int k : idx.history) {
          pg.history_min = std::min(
              pg.history_min, goal_stage_cost(g, history.state(k), pos, history.time_at(k)));
        }
        pg.prediction = std::move(idx.prediction);
        if (pg.history_min <= 0.0) {
          pg.kind = GoalKind::kLatched;
        } else if (pg.prediction.empty() && idx.history.empty()) {
          pg.kind = GoalKind::kUnreachable;
        } else {
          pg.kind = GoalKind::kWindowed;
        }
      }
      goals_.push_back(std::move(pg));
    }
    history_obstacle_max_.assign(tasks.avoids.size(), -std::numeric_limits<double>::infinity());
    if (tasks.combination == CostCombination::kMinOfCosts) {
      for (std::size_t o = 0; o < tasks.avoids.size(); ++o) {
        const int end = std::min(history.size(), static_cast<int>(std::lround((now - history.start_time()) / dt)));
        for (int k = 0; k < end; ++k) {
          history_obstacle_max_[o] = std::max(history_obstacle_max_[o],
                                              obstacle_stage_cost(tasks.avoids[o], history.state(k), pos));
        }
      }
    }
  }

  double goal_cost(std::size_t i, const RolloutView& r) const {
    const GoalTask& g = tasks_->goals[i];
    const PreparedGoal& pg = goals_[i];
    switch (pg.kind) {
      case GoalKind::kTimeInvariant: {
        double sum = 0.0;
        for (int k = 0; k < r.steps; ++k) sum += goal_stage_cost(g, r.position(k), time_of(k));
        return sum;
      }
      case GoalKind::kLatched:
        return pg.history_min;
      case GoalKind::kUnreachable:
        return goal_stage_cost(g, r.position(r.steps - 1), time_of(r.steps - 1));
      case GoalKind::kWindowed: {
        double best = pg.history_min;
        for (int k : pg.prediction) {
          if (k >= r.steps) break;
          best = std::min(best, goal_stage_cost(g, r.position(k), time_of(k)));
        }
        return best;
      }
    }
    return 0.0;
  }

  /// Signed avoid term: -max over history and rollout (min-of-costs mode) or
  /// +max over the rollout (penalty).
  double avoid_cost(std::size_t o, const RolloutView& r) const {
    const AvoidTask& a = tasks_->avoids[o];
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < r.steps; ++k) worst = std::max(worst, obstacle_stage_cost(a, r.position(k)));
    if (tasks_->combination == CostCombination::kMinOfCosts) {
      return -std::max(worst, history_obstacle_max_[o]);
    }
    return worst;
  }

  double operator()(const RolloutView& r) const {
    if (all_time_invariant_) {
      double sum = 0.0;
      for (int k = 0; k < r.steps; ++k) {
        const Point2 p = r.position(k);
        const double t = time_of(k);
        for (const auto& g : tasks_->goals) sum += goal_stage_cost(g, p, t);
        for (const auto& a : tasks_->avoids) sum += obstacle_stage_cost(a, p);
      }
      return sum;
    }
    if (tasks_->combination == CostCombination::kMinOfCosts) {
      double q = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < goals_.size(); ++i) q = std::min(q, goal_cost(i, r));
      for (std::size_t o = 0; o < tasks_->avoids.size(); ++o) q = std::min(q, avoid_cost(o, r));
      return q;
    }
    double q = 0.0;
    for (std::size_t i = 0; i < goals_.size(); ++i) q += goal_cost(i, r);
    for (std::size_t o = 0; o < tasks_->avoids.size(); ++o) q += avoid_cost(o, r);
    return q;
  }

  bool goal_latched(std::size_t i) const { return goals_[i].kind == GoalKind::kLatched; }
  int horizon() const { return horizon_; }

 private:
  enum class GoalKind { kTimeInvariant, kLatched, kUnreachable, kWindowed };
  struct PreparedGoal {
    GoalKind kind = GoalKind::kTimeInvariant;
    double history_min = std::numeric_limits<double>::infinity();
    std::vector<int> prediction;
  };

  double time_of(int k) const { return now_ + k * dt_; }

  const TaskSet* tasks_;
  double now_;
  double dt_;
  int horizon_;
  PositionIndices pos_;
  bool all_time_invariant_ = false;
  std::vector<PreparedGoal> goals_;
  std::vector<double> history_obstacle_max_;
};

/// Minimum goal stage cost over the window, reading past samples from the
/// history. A window with no samples this cycle scores the final rollout state.
inline double goal_window_cost(const GoalTask& task, const RolloutView& rollout,
                               const HistoryBuffer& history, double now, double dt) {
  if (!task.window) throw ValidationError("goal_window_cost needs a windowed goal");
  TaskSet single;
  single.goals.push_back(task);
  TaskCostEvaluator eval(single, history, now, rollout.steps - 1, dt, rollout.pos);
  return eval.goal_cost(0, rollout);
}

inline double avoid_window_cost(const AvoidTask& task, const RolloutView& rollout,
                                const HistoryBuffer& history, double now, double dt,
                                CostCombination mode) {
  if (rollout.steps < 1) throw ValidationError("avoid_window_cost needs a nonempty rollout");
  TaskSet single;
  single.avoids.push_back(task);
  single.combination = mode;
  TaskCostEvaluator eval(single, history, now, rollout.steps - 1, dt, rollout.pos);
  return eval.avoid_cost(0, rollout);
}

inline double trajectory_task_cost(const TaskSet& tasks, const RolloutView& rollout,
                                   const HistoryBuffer& history, double now, double dt) {
  TaskCostEvaluator eval(tasks, history, now, rollout.steps - 1, dt, rollout.pos);
  return eval(rollout);
}

}  // namespace safe_mppi
