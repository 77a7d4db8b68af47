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

// Multi-seed experiments behind the `reproduce` command and the acceptance
// suite: the timed reach-avoid run and the three-way safety comparison.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "safe_mppi/simkit.hpp"

namespace safe_mppi {

struct ExperimentOptions {
  int samples = 0;  // 0 keeps the scenario value
  int workers = 1;
  std::uint64_t first_seed = 0;
};

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, int count) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
  return seeds;
}

inline RunOptions run_options(const ExperimentOptions& opts) {
  RunOptions r;
  r.workers = opts.workers;
  if (opts.samples > 0) r.samples_override = opts.samples;
  return r;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  Metrics metrics;
};

struct ReachAvoidReport {
  std::vector<SeedOutcome> runs;
  int successes = 0;
  double wall_seconds = 0.0;

  static bool success(const Metrics& m) {
    if (m.diverged) return false;
    for (const auto& g : m.goals) {
      if (!g.in_window) return false;
    }
    return m.min_clearance > 0.0;
  }
};

inline ReachAvoidReport run_reach_avoid_experiment(const Scenario& sc, int seeds, const ExperimentOptions& opts = {}) {
  ReachAvoidReport report;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed : seed_range(opts.first_seed, seeds)) {
    const SimTrace trace = run_closed_loop(sc, seed, run_options(opts));
    SeedOutcome outcome{seed, evaluate_metrics(trace, sc)};
    report.successes += ReachAvoidReport::success(outcome.metrics);
    report.runs.push_back(std::move(outcome));
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

struct SafetyComparisonReport {
  std::vector<ComparisonRow> rows;
  int filtered_safe_seeds = 0;       // MPPI + stochastic filter, h >= 0 throughout
  int unfiltered_violating_seeds = 0;  // MPPI alone, some h < 0
  double filter_only_median_distance = 0.0;
  double filtered_median_distance = 0.0;
  double wall_seconds = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

/// Runs the filter-only, planner-only and planner+filter scenarios over the
/// same seeds.
inline SafetyComparisonReport run_safety_comparison(const Scenario& filter_only, const Scenario& planner_only,
                                                    const Scenario& planner_filtered, int seeds,
                                                    const ExperimentOptions& opts = {}) {
  SafetyComparisonReport report;
  const auto t0 = std::chrono::steady_clock::now();
  report.rows = compare_runs({filter_only, planner_only, planner_filtered}, seed_range(opts.first_seed, seeds),
                             run_options(opts));
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<double> filter_only_dist;
  std::vector<double> filtered_dist;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const Metrics& m = report.rows[i].metrics;
    switch (i / static_cast<std::size_t>(seeds)) {
      case 0:
        filter_only_dist.push_back(m.terminal_goal_distance);
        break;
      case 1:
        report.unfiltered_violating_seeds += m.min_barrier < 0.0;
        break;
      default:
        filtered_dist.push_back(m.terminal_goal_distance);
        report.filtered_safe_seeds += m.min_barrier >= 0.0 && !m.diverged;
    }
  }
  report.filter_only_median_distance = median(filter_only_dist);
  report.filtered_median_distance = median(filtered_dist);
  return report;
}

}  // namespace safe_mppi
