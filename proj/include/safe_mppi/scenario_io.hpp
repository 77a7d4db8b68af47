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

// JSON scenario files and metrics output. Parsing is strict: unknown keys,
// wrong types and out-of-range values are rejected before any simulation.

#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "safe_mppi/errors.hpp"
#include "safe_mppi/simkit.hpp"

namespace safe_mppi {

inline constexpr int kScenarioSpecVersion = 1;

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

inline double get_number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  const json& v = obj.at(key);
  if (!v.is_number()) throw ValidationError(where + "." + key + ": expected a number");
  return v.get<double>();
}

inline double get_number_or(const json& obj, const std::string& key, double fallback, const std::string& where) {
  return obj.contains(key) ? get_number(obj, key, where) : fallback;
}

inline std::string get_string(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key) || !obj.at(key).is_string()) throw ValidationError(where + ": '" + key + "' must be a string");
  return obj.at(key).get<std::string>();
}

inline Vec parse_vector(const json& v, const std::string& where) {
  if (!v.is_array()) throw ValidationError(where + ": expected an array of numbers");
  if (v.size() > static_cast<std::size_t>(kMaxDim)) throw ValidationError(where + ": too many entries");
  Vec out(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ValidationError(where + ": expected numbers");
    out(static_cast<int>(i)) = v[i].get<double>();
  }
  return out;
}

inline Mat parse_matrix(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ValidationError(where + ": expected a nonempty array of rows");
  if (v.size() > static_cast<std::size_t>(kMaxDim)) throw ValidationError(where + ": too many rows");
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  if (cols == 0 || cols > static_cast<std::size_t>(kMaxDim)) throw ValidationError(where + ": bad row length");
  Mat out(static_cast<int>(v.size()), static_cast<int>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (!v[r].is_array() || v[r].size() != cols) throw ValidationError(where + ": rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!v[r][c].is_number()) throw ValidationError(where + ": expected numbers");
      out(static_cast<int>(r), static_cast<int>(c)) = v[r][c].get<double>();
    }
  }
  return out;
}

inline InputBounds parse_bounds(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ValidationError(where + ": expected [[lo, hi], ...]");
  InputBounds b{Vec(static_cast<int>(v.size())), Vec(static_cast<int>(v.size()))};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_array() || v[i].size() != 2 || !v[i][0].is_number() || !v[i][1].is_number()) {
      throw ValidationError(where + ": each channel needs [lo, hi]");
    }
    b.lower(static_cast<int>(i)) = v[i][0].get<double>();
    b.upper(static_cast<int>(i)) = v[i][1].get<double>();
  }
  b.validate();
  return b;
}

inline TaskSet parse_tasks(const json& v) {
  check_keys(v, {"combination", "goals", "obstacles"}, "tasks");
  TaskSet tasks;
  const std::string mode = v.contains("combination") ? get_string(v, "combination", "tasks") : "penalty_sum";
  if (mode == "penalty_sum") tasks.combination = CostCombination::kPenaltySum;
  else if (mode == "paper_literal") tasks.combination = CostCombination::kMinOfCosts;
  else throw ValidationError("tasks.combination must be penalty_sum or paper_literal");
  if (v.contains("goals")) {
    if (!v.at("goals").is_array()) throw ValidationError("tasks.goals must be an array");
    for (const auto& g : v.at("goals")) {
      check_keys(g, {"x", "y", "radius", "gain", "window"}, "goal");
      GoalTask goal;
      goal.position = {get_number(g, "x", "goal"), get_number(g, "y", "goal")};
      goal.radius = get_number(g, "radius", "goal");
      goal.gain = get_number_or(g, "gain", 1.0, "goal");
      if (g.contains("window") && !g.at("window").is_null()) {
        const Vec w = parse_vector(g.at("window"), "goal.window");
        if (w.size() != 2) throw ValidationError("goal.window must be [t1, t2]");
        goal.window = TimeWindow{w(0), w(1)};
      }
      tasks.goals.push_back(goal);
    }
  }
  if (v.contains("obstacles")) {
    if (!v.at("obstacles").is_array()) throw ValidationError("tasks.obstacles must be an array");
    for (const auto& o : v.at("obstacles")) {
      check_keys(o, {"x", "y", "radius", "gain", "epsilon"}, "obstacle");
      AvoidTask a;
      a.position = {get_number(o, "x", "obstacle"), get_number(o, "y", "obstacle")};
      a.physical_radius = get_number_or(o, "radius", 0.0, "obstacle");
      a.gain = get_number_or(o, "gain", 1.0, "obstacle");
      a.epsilon = get_number_or(o, "epsilon", 0.01, "obstacle");
      tasks.avoids.push_back(a);
    }
  }
  tasks.validate();
  return tasks;
}

inline MppiConfig parse_planner(const json& v, const InputBounds& bounds) {
  check_keys(v, {"horizon", "samples", "lambda", "noise_std", "seed", "iterations"}, "planner");
  MppiConfig cfg;
  cfg.horizon = static_cast<int>(get_number_or(v, "horizon", 50, "planner"));
  cfg.samples = static_cast<int>(get_number_or(v, "samples", 1000, "planner"));
  cfg.temperature = get_number_or(v, "lambda", 1.0, "planner");
  cfg.iterations = static_cast<int>(get_number_or(v, "iterations", 1, "planner"));
  cfg.seed = static_cast<std::uint64_t>(get_number_or(v, "seed", 0, "planner"));
  cfg.control_bounds = bounds;
  if (v.contains("noise_std")) {
    const Vec std_dev = parse_vector(v.at("noise_std"), "planner.noise_std");
    if (std_dev.size() != bounds.dim()) throw ValidationError("planner.noise_std needs one entry per input");
    for (int i = 0; i < std_dev.size(); ++i) {
      if (!(std_dev(i) >= 0.0)) throw ValidationError("planner.noise_std entries must be >= 0");
    }
    cfg.noise_covariance = MppiConfig::diagonal_covariance(std_dev);
  } else {
    for (int i = 0; i < bounds.dim(); ++i) {
      if (!std::isfinite(bounds.lower(i)) || !std::isfinite(bounds.upper(i))) {
        throw ValidationError("planner.noise_std is required when input bounds are infinite");
      }
    }
    cfg.noise_covariance = MppiConfig::default_covariance(bounds);
  }
  return cfg;
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j, const ModelRegistry& registry = ModelRegistry::builtin()) {
  using detail::get_number;
  using detail::get_number_or;
  using detail::get_string;
  detail::check_keys(j, {"spec_version", "name", "model", "initial_state", "duration", "dt", "integrator",
                         "plant_noise", "disturbance", "tasks", "planner", "nominal_controller", "proportional",
                         "filter", "estimator", "sensor", "initial_covariance", "process_noise", "seed"},
                     "scenario");
  Scenario sc;
  sc.spec_version = static_cast<int>(get_number(j, "spec_version", "scenario"));
  if (sc.spec_version != kScenarioSpecVersion) {
    throw ValidationError("unsupported spec_version " + std::to_string(sc.spec_version));
  }
  if (j.contains("name")) sc.name = get_string(j, "name", "scenario");

  if (!j.contains("model")) throw ValidationError("scenario: missing 'model'");
  const auto& model = j.at("model");
  std::optional<InputBounds> bounds;
  if (model.is_string()) {
    sc.model_id = model.get<std::string>();
  } else {
    detail::check_keys(model, {"id", "input_bounds"}, "model");
    sc.model_id = get_string(model, "id", "model");
    if (model.contains("input_bounds")) bounds = detail::parse_bounds(model.at("input_bounds"), "model.input_bounds");
  }
  sc.model = registry.make(sc.model_id, bounds);
  const int n = sc.model.state_dim();

  if (!j.contains("initial_state")) throw ValidationError("scenario: missing 'initial_state'");
  sc.initial_state = detail::parse_vector(j.at("initial_state"), "initial_state");
  sc.duration = get_number(j, "duration", "scenario");
  sc.dt = get_number_or(j, "dt", 0.05, "scenario");
  const std::string integrator = j.contains("integrator") ? get_string(j, "integrator", "scenario") : "euler";
  if (integrator == "euler") sc.integrator = Scheme::kEuler;
  else if (integrator == "rk4") sc.integrator = Scheme::kRk4;
  else throw ValidationError("integrator must be euler or rk4");
  sc.plant_noise = get_number_or(j, "plant_noise", 0.0, "scenario");
  if (j.contains("disturbance")) {
    const auto& d = j.at("disturbance");
    detail::check_keys(d, {"M", "bound"}, "disturbance");
    sc.disturbance = DisturbanceConfig{detail::parse_matrix(d.at("M"), "disturbance.M"),
                                       detail::parse_vector(d.at("bound"), "disturbance.bound")};
  }
  if (!j.contains("tasks")) throw ValidationError("scenario: missing 'tasks'");
  sc.tasks = detail::parse_tasks(j.at("tasks"));

  if (j.contains("planner") && !(j.at("planner").is_string() && j.at("planner").get<std::string>() == "none")) {
    sc.planner = detail::parse_planner(j.at("planner"), sc.model.input_bounds());
  }
  std::string nominal = sc.planner ? "mppi_first_control" : "proportional_to_goal";
  if (j.contains("nominal_controller")) nominal = get_string(j, "nominal_controller", "scenario");
  if (nominal == "mppi_first_control") sc.nominal = NominalController::kMppiFirstControl;
  else if (nominal == "proportional_to_goal") sc.nominal = NominalController::kProportionalToGoal;
  else throw ValidationError("nominal_controller must be mppi_first_control or proportional_to_goal");
  if (j.contains("proportional")) {
    const auto& p = j.at("proportional");
    detail::check_keys(p, {"gain", "heading_gain", "speed_gain", "max_speed"}, "proportional");
    sc.proportional.gain = get_number_or(p, "gain", sc.proportional.gain, "proportional");
    sc.proportional.heading_gain = get_number_or(p, "heading_gain", sc.proportional.heading_gain, "proportional");
    sc.proportional.speed_gain = get_number_or(p, "speed_gain", sc.proportional.speed_gain, "proportional");
    sc.proportional.max_speed = get_number_or(p, "max_speed", sc.proportional.max_speed, "proportional");
  }

  double margin = 0.0;
  bool barriers_from_obstacles = true;
  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    detail::check_keys(f, {"variant", "gamma", "barriers", "margin", "rectify_gains"}, "filter");
    const std::string variant = f.contains("variant") ? get_string(f, "variant", "filter") : "none";
    if (variant == "none") sc.filter.variant = FilterVariant::kNone;
    else if (variant == "vanilla") sc.filter.variant = FilterVariant::kVanilla;
    else if (variant == "robust") sc.filter.variant = FilterVariant::kRobust;
    else if (variant == "stochastic") sc.filter.variant = FilterVariant::kStochastic;
    else throw ValidationError("filter.variant must be vanilla, robust, stochastic or none");
    sc.filter.gamma = get_number_or(f, "gamma", 1.0, "filter");
    margin = get_number_or(f, "margin", 0.0, "filter");
    if (f.contains("rectify_gains")) {
      const Vec g = detail::parse_vector(f.at("rectify_gains"), "filter.rectify_gains");
      sc.filter.rectify_gains.assign(g.data(), g.data() + g.size());
    }
    if (f.contains("barriers")) {
      const auto& b = f.at("barriers");
      if (b.is_string()) {
        if (b.get<std::string>() != "obstacles") throw ValidationError("filter.barriers must be 'obstacles' or a list");
      } else if (b.is_array()) {
        barriers_from_obstacles = false;
        for (const auto& c : b) {
          detail::check_keys(c, {"x", "y", "radius"}, "barrier");
          sc.filter.barriers.push_back(
              {{get_number(c, "x", "barrier"), get_number(c, "y", "barrier")}, get_number(c, "radius", "barrier")});
        }
      } else {
        throw ValidationError("filter.barriers must be 'obstacles' or a list");
      }
    }
  }
  sc.filter.margin = margin;
  if (barriers_from_obstacles) {
    for (const auto& o : sc.tasks.avoids) {
      if (o.physical_radius > 0.0) sc.filter.barriers.push_back({o.position, o.physical_radius});
    }
  }

  const std::string estimator = j.contains("estimator") ? get_string(j, "estimator", "scenario") : "none";
  if (estimator == "none") sc.estimator = EstimatorKind::kNone;
  else if (estimator == "ekf") sc.estimator = EstimatorKind::kEkf;
  else if (estimator == "ukf") sc.estimator = EstimatorKind::kUkf;
  else throw ValidationError("estimator must be none, ekf or ukf");
  sc.sensor = SensorModel::perfect(n, sc.dt);
  if (j.contains("sensor")) {
    const auto& s = j.at("sensor");
    detail::check_keys(s, {"C", "D"}, "sensor");
    if (s.contains("C")) sc.sensor.observation_matrix = detail::parse_matrix(s.at("C"), "sensor.C");
    if (s.contains("D")) sc.sensor.noise_matrix = detail::parse_matrix(s.at("D"), "sensor.D");
    else sc.sensor.noise_matrix = Mat::Zero(sc.sensor.observation_matrix.rows(), sc.sensor.observation_matrix.rows());
  }
  if (j.contains("initial_covariance")) sc.initial_covariance = detail::parse_matrix(j.at("initial_covariance"), "initial_covariance");
  if (j.contains("process_noise")) sc.process_noise = detail::parse_matrix(j.at("process_noise"), "process_noise");
  sc.seed = static_cast<std::uint64_t>(get_number_or(j, "seed", 0, "scenario"));
  sc.validate();
  return sc;
}

inline Scenario parse_scenario_text(const std::string& text, const ModelRegistry& registry = ModelRegistry::builtin()) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return parse_scenario(j, registry);
}

inline Scenario load_scenario(const std::string& path, const ModelRegistry& registry = ModelRegistry::builtin()) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_text(buffer.str(), registry);
}

inline nlohmann::json metrics_to_json(const Metrics& m, const Scenario& sc) {
  auto number_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json goals = nlohmann::json::array();
  for (std::size_t i = 0; i < m.goals.size(); ++i) {
    nlohmann::json g;
    g["index"] = i;
    g["first_entry_time"] = m.goals[i].first_entry_time ? nlohmann::json(*m.goals[i].first_entry_time) : nlohmann::json(nullptr);
    g["in_window"] = m.goals[i].in_window;
    if (sc.tasks.goals[i].window) g["window"] = {sc.tasks.goals[i].window->t1, sc.tasks.goals[i].window->t2};
    goals.push_back(g);
  }
  nlohmann::json out;
  out["scenario"] = sc.name;
  out["goals"] = goals;
  out["min_obstacle_clearance"] = number_or_null(m.min_clearance);
  out["min_barrier_value"] = number_or_null(m.min_barrier);
  out["terminal_goal_distance"] = number_or_null(m.terminal_goal_distance);
  out["infeasible_steps"] = m.infeasible_steps;
  out["diverged"] = m.diverged;
  out["steps"] = m.steps;
  return out;
}

/// method, seed, min_clearance, min_barrier, terminal_goal_distance, infeasible_steps, diverged, goal_i_in_window...
inline void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  std::size_t goals = 0;
  for (const auto& r : rows) goals = std::max(goals, r.metrics.goals.size());
  os << "method,seed,min_clearance,min_barrier,terminal_goal_distance,infeasible_steps,diverged";
  for (std::size_t g = 0; g < goals; ++g) os << ",goal" << (g + 1) << "_in_window";
  os << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << r.seed << ',' << format_double(r.metrics.min_clearance) << ','
       << format_double(r.metrics.min_barrier) << ',' << format_double(r.metrics.terminal_goal_distance) << ','
       << r.metrics.infeasible_steps << ',' << (r.metrics.diverged ? 1 : 0);
    for (std::size_t g = 0; g < goals; ++g) {
      os << ',' << (g < r.metrics.goals.size() && r.metrics.goals[g].in_window ? 1 : 0);
    }
    os << '\n';
  }
}

}  // namespace safe_mppi
