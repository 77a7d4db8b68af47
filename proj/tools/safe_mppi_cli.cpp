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

// safe_mppi command-line front end.
//
//   safe_mppi run --scenario s.json [--seed N | --seeds 0-9] --out dir [--emit svg,sampled_rollouts]
//   safe_mppi compare --scenario a.json --scenario b.json --seeds 0-4 --out dir
//   safe_mppi reproduce reach_avoid|mppi_cbf [--out dir]
//   safe_mppi validate --scenario s.json
//
// Exit codes: 0 ok, 1 acceptance failure, 2 validation error, 3 diverged run.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "safe_mppi/packaged_scenarios.hpp"
#include "safe_mppi.hpp"

namespace fs = std::filesystem;
using namespace safe_mppi;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAcceptance = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDiverged = 3;

constexpr int kReachAvoidSeeds = 10;
constexpr int kReachAvoidSamples = 2000;
constexpr int kReachAvoidRequired = 9;
constexpr double kReachAvoidBudgetSeconds = 120.0;
constexpr int kSafetySeeds = 20;
constexpr int kSafetySamples = 4000;
constexpr int kSafetyRequired = 19;

std::optional<int> env_samples_override() {
  const char* raw = std::getenv("SAFE_MPPI_SAMPLES_OVERRIDE");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1) throw ValidationError("SAFE_MPPI_SAMPLES_OVERRIDE must be a positive integer");
  return static_cast<int>(v);
}

Scenario resolve_scenario(const std::string& ref) {
  if (fs::exists(ref)) return load_scenario(ref);
  const auto& packaged = packaged_scenarios();
  if (auto it = packaged.find(ref); it != packaged.end()) return parse_scenario_text(std::string(it->second));
  throw ValidationError("scenario file '" + ref + "' not found");
}

/// "3", "0-9" or "1,4,7".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  auto to_u64 = [](const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ValidationError("bad seed '" + s + "'");
    }
    return static_cast<std::uint64_t>(std::stoull(s));
  };
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(to_u64(item));
      continue;
    }
    const std::uint64_t lo = to_u64(item.substr(0, dash));
    const std::uint64_t hi = to_u64(item.substr(dash + 1));
    if (hi < lo) throw ValidationError("bad seed range '" + item + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  }
  if (seeds.empty()) throw ValidationError("empty seed list");
  return seeds;
}

std::set<std::string> parse_emit(const std::vector<std::string>& items) {
  static const std::set<std::string> kKnown = {"trace", "metrics", "svg", "sampled_rollouts"};
  std::set<std::string> out;
  for (const auto& raw : items) {
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!kKnown.count(item)) throw ValidationError("unknown --emit value '" + item + "'");
      out.insert(item);
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct RunArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::string out = "out";
  std::vector<std::string> emit;
  int workers = 1;
  int dump_every = 10;
  int dump_samples = 0;
};

std::vector<std::uint64_t> seeds_of(const Scenario& sc, const RunArgs& a) {
  if (a.seed && !a.seeds.empty()) throw ValidationError("use either --seed or --seeds");
  if (a.seed) return {*a.seed};
  if (!a.seeds.empty()) return parse_seeds(a.seeds);
  return {sc.seed};
}

int cmd_run(const RunArgs& a) {
  const Scenario sc = resolve_scenario(a.scenario);
  const auto seeds = seeds_of(sc, a);
  const auto emit = parse_emit(a.emit);
  RunOptions opts;
  opts.workers = a.workers;
  opts.samples_override = env_samples_override();
  if (a.dump_every < 1) throw ValidationError("--dump-every must be >= 1");

  int code = kExitOk;
  for (std::uint64_t seed : seeds) {
    const fs::path dir = seeds.size() > 1 ? fs::path(a.out) / ("seed_" + std::to_string(seed)) : fs::path(a.out);
    fs::create_directories(dir);
    RunOptions seed_opts = opts;
    if (emit.count("sampled_rollouts")) {
      fs::create_directories(dir / "rollouts");
      seed_opts.rollout_dump = [&, dir](int step, const RolloutBatch& batch, const std::vector<double>& w) {
        if (step % a.dump_every != 0) return;
        char name[32];
        std::snprintf(name, sizeof(name), "step_%05d.csv", step);
        std::ofstream out(dir / "rollouts" / name);
        write_rollout_csv(out, batch, w, a.dump_samples);
      };
    }
    const SimTrace trace = run_closed_loop(sc, seed, seed_opts);
    const Metrics metrics = evaluate_metrics(trace, sc);
    {
      std::ofstream out(dir / "trace.csv");
      write_trace_csv(out, trace);
    }
    write_text(dir / "metrics.json", metrics_to_json(metrics, sc).dump(2) + "\n");
    if (emit.count("svg")) write_text(dir / "plot.svg", render_svg(sc, trace));
    if (trace.diverged) {
      std::cerr << "seed " << seed << ": run diverged at t=" << trace.time.back() << "\n";
      code = kExitDiverged;
    }
  }
  return code;
}

int cmd_compare(const std::vector<std::string>& refs, const RunArgs& a) {
  std::vector<Scenario> scenarios;
  for (const auto& r : refs) scenarios.push_back(resolve_scenario(r));
  const auto seeds = a.seeds.empty() ? std::vector<std::uint64_t>{a.seed.value_or(0)} : parse_seeds(a.seeds);
  RunOptions opts;
  opts.workers = a.workers;
  opts.samples_override = env_samples_override();
  const auto rows = compare_runs(scenarios, seeds, opts);
  fs::create_directories(a.out);
  {
    std::ofstream out(fs::path(a.out) / "comparison.csv");
    write_comparison_csv(out, rows);
  }
  std::vector<SimTrace> traces;
  traces.reserve(scenarios.size());
  for (const auto& sc : scenarios) traces.push_back(run_closed_loop(sc, seeds.front(), opts));
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < scenarios.size(); ++i) series.push_back({scenarios[i].name, &traces[i]});
  write_text(fs::path(a.out) / "compare.svg", render_svg(scenarios.front(), series));
  write_comparison_csv(std::cout, rows);
  for (const auto& r : rows) {
    if (r.metrics.diverged) return kExitDiverged;
  }
  return kExitOk;
}

void report(bool pass, const std::string& line) {
  std::cout << (pass ? "PASS  " : "FAIL  ") << line << "\n";
}

int cmd_reproduce(const std::string& experiment, const RunArgs& a) {
  ExperimentOptions opts;
  opts.workers = a.workers;
  const auto override_samples = env_samples_override();
  if (experiment == "reach_avoid") {
    const Scenario sc = resolve_scenario("reach_avoid");
    opts.samples = override_samples.value_or(kReachAvoidSamples);
    const auto r = run_reach_avoid_experiment(sc, kReachAvoidSeeds, opts);
    for (const auto& run : r.runs) {
      std::cout << "seed " << run.seed << ":";
      for (std::size_t g = 0; g < run.metrics.goals.size(); ++g) {
        std::cout << " g" << (g + 1) << "=" << (run.metrics.goals[g].in_window ? "in-window" : "missed");
      }
      std::cout << " clearance=" << run.metrics.min_clearance << "\n";
    }
    const bool seeds_ok = r.successes >= kReachAvoidRequired;
    const bool time_ok = r.wall_seconds <= kReachAvoidBudgetSeconds;
    report(seeds_ok, "reach_avoid: all goals in window with clearance > 0 in " + std::to_string(r.successes) + "/" +
                         std::to_string(kReachAvoidSeeds) + " seeds (need " + std::to_string(kReachAvoidRequired) + ")");
    report(time_ok, "reach_avoid: wall time " + std::to_string(r.wall_seconds) + " s (budget 120 s)");
    return seeds_ok && time_ok ? kExitOk : kExitAcceptance;
  }
  if (experiment == "mppi_cbf") {
    opts.samples = override_samples.value_or(kSafetySamples);
    const Scenario filter_only = resolve_scenario("scbf_only");
    const Scenario planner_only = resolve_scenario("mppi_only");
    const Scenario both = resolve_scenario("mppi_scbf");
    const auto r = run_safety_comparison(filter_only, planner_only, both, kSafetySeeds, opts);
    for (std::size_t m = 0; m < 3; ++m) {
      double min_h = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < kSafetySeeds; ++s) {
        min_h = std::min(min_h, r.rows[m * kSafetySeeds + s].metrics.min_barrier);
      }
      std::cout << r.rows[m * kSafetySeeds].method << ": min h over all seeds = " << min_h << "\n";
    }
    if (!a.out.empty()) {
      fs::create_directories(a.out);
      std::ofstream out(fs::path(a.out) / "comparison.csv");
      write_comparison_csv(out, r.rows);
    }
    const bool safe = r.filtered_safe_seeds >= kSafetyRequired;
    const bool violates = r.unfiltered_violating_seeds >= 1;
    const bool stuck = r.filter_only_median_distance > r.filtered_median_distance;
    report(safe, "mppi_cbf: filtered planner keeps h >= 0 in " + std::to_string(r.filtered_safe_seeds) + "/" +
                     std::to_string(kSafetySeeds) + " seeds (need " + std::to_string(kSafetyRequired) + ")");
    report(violates, "mppi_cbf: unfiltered planner reaches h < 0 in " + std::to_string(r.unfiltered_violating_seeds) +
                         " seeds (need >= 1)");
    report(stuck, "mppi_cbf: median terminal distance filter-only " + std::to_string(r.filter_only_median_distance) +
                      " vs filtered planner " + std::to_string(r.filtered_median_distance));
    return safe && violates && stuck ? kExitOk : kExitAcceptance;
  }
  std::cerr << "unknown experiment '" << experiment << "' (expected reach_avoid or mppi_cbf)\n";
  return kExitValidation;
}

int cmd_validate(const std::string& ref) {
  const Scenario sc = resolve_scenario(ref);
  std::cout << "ok: " << sc.name << " (" << sc.model_id << ", " << sc.steps() << " steps)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling-based planning with barrier-function safety filters"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", run_args.out, "Output directory");
    sub->add_option("--workers", run_args.workers, "Rollout worker threads")->check(CLI::PositiveNumber);
  };
  auto add_seeds = [&](CLI::App* sub) {
    sub->add_option("--seed", run_args.seed, "Single seed");
    sub->add_option("--seeds", run_args.seeds, "Seed list, e.g. 0-9 or 1,4,7");
  };

  auto* run = app.add_subcommand("run", "Simulate one scenario");
  run->add_option("--scenario", run_args.scenario, "Scenario JSON file or packaged name")->required();
  add_seeds(run);
  add_common(run);
  run->add_option("--emit", run_args.emit, "Extra outputs: svg, sampled_rollouts")->delimiter(',');
  run->add_option("--dump-every", run_args.dump_every, "Rollout dump period in control steps");
  run->add_option("--dump-samples", run_args.dump_samples, "Samples per rollout dump (0 = all)");

  std::vector<std::string> compare_refs;
  auto* compare = app.add_subcommand("compare", "Run several scenarios over shared seeds");
  compare->add_option("--scenario", compare_refs, "Scenario files or packaged names")->required();
  add_seeds(compare);
  add_common(compare);

  std::string experiment;
  auto* reproduce = app.add_subcommand("reproduce", "Run a packaged experiment and check its acceptance criteria");
  reproduce->add_option("experiment", experiment, "reach_avoid or mppi_cbf")->required();
  add_common(reproduce);

  std::string validate_ref;
  auto* validate = app.add_subcommand("validate", "Check a scenario file without simulating");
  validate->add_option("--scenario", validate_ref, "Scenario file or packaged name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*compare) return cmd_compare(compare_refs, run_args);
    if (*reproduce) {
      if (reproduce->count("--out") == 0) run_args.out.clear();
      return cmd_reproduce(experiment, run_args);
    }
    if (*validate) return cmd_validate(validate_ref);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
