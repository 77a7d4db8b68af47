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

// Model Predictive Path Integral sampler. Each cycle perturbs the mean
// control sequence with Gaussian noise, rolls the perturbed sequences through
// the nominal discrete dynamics, scores them with the task cost plus the
// control penalty, and shifts the mean by the softmin-weighted noise.
//
// Sample k of iteration i always draws from the same counter-based stream,
// and every reduction over samples runs in index order, so the result does
// not depend on how samples are split across worker threads.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "safe_mppi/dynamics.hpp"
#include "safe_mppi/errors.hpp"
#include "safe_mppi/random.hpp"
#include "safe_mppi/reach_avoid.hpp"

namespace safe_mppi {

struct MppiConfig {
  int horizon = 50;
  int samples = 1000;
  double temperature = 1.0;
  Mat noise_covariance;  // m x m
  InputBounds control_bounds;
  std::uint64_t seed = 0;
  int iterations = 1;  // sampling iterations per control cycle
  int workers = 1;

  int input_dim() const { return static_cast<int>(noise_covariance.rows()); }

  /// Diagonal covariance with standard deviation = 25% of each channel's half-width.
  static Mat default_covariance(const InputBounds& bounds) {
    const int m = bounds.dim();
    Mat cov = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      const double std_dev = 0.25 * 0.5 * (bounds.upper(i) - bounds.lower(i));
      cov(i, i) = std_dev * std_dev;
    }
    return cov;
  }

  static Mat diagonal_covariance(const Vec& std_dev) {
    return Mat(std_dev.cwiseProduct(std_dev).asDiagonal());
  }

  void validate() const {
    if (horizon < 1) throw ValidationError("mppi horizon must be >= 1");
    if (samples < 1) throw ValidationError("mppi samples must be >= 1");
    if (!(temperature > 0.0)) throw ValidationError("mppi temperature (lambda) must be > 0");
    if (iterations < 1) throw ValidationError("mppi iterations must be >= 1");
    if (workers < 1) throw ValidationError("mppi workers must be >= 1");
    const int m = input_dim();
    if (m < 1 || noise_covariance.cols() != m) throw ValidationError("noise covariance must be square");
    if (control_bounds.dim() != m) throw ValidationError("control bounds dimension mismatch");
    control_bounds.validate();
    if ((noise_covariance - noise_covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw ValidationError("noise covariance must be symmetric");
    }
    if (!noise_covariance.isZero(0.0) && noise_covariance.llt().info() != Eigen::Success) {
      throw ValidationError("noise covariance must be positive definite");
    }
  }
};

/// H x m mean controls, row t holding v_t.
struct ControlSequence {
  Eigen::MatrixXd controls;

  static ControlSequence zeros(int horizon, int m) { return {Eigen::MatrixXd::Zero(horizon, m)}; }
  int horizon() const { return static_cast<int>(controls.rows()); }
  int dim() const { return static_cast<int>(controls.cols()); }
  ControlVector at(int t) const { return controls.row(t).transpose(); }
};

/// K x H x m perturbations, sample-major.
struct NoiseTensor {
  int samples = 0;
  int horizon = 0;
  int dim = 0;
  std::vector<double> data;

  double* sample(int k) { return data.data() + static_cast<std::ptrdiff_t>(k) * horizon * dim; }
  const double* sample(int k) const {
    return data.data() + static_cast<std::ptrdiff_t>(k) * horizon * dim;
  }
  double at(int k, int t, int c) const { return sample(k)[t * dim + c]; }
};

struct RolloutBatch {
  NoiseTensor noises;
  std::vector<double> states;  // K x (H+1) x n
  std::vector<double> costs;   // K
  int state_dim = 0;

  RolloutView view(int k, PositionIndices pos) const {
    const int steps = noises.horizon + 1;
    return {states.data() + static_cast<std::ptrdiff_t>(k) * steps * state_dim, steps, state_dim, pos};
  }
};

struct MppiSolution {
  ControlSequence mean;
  std::vector<double> weights;
  Eigen::MatrixXd nominal_trajectory;  // (H+1) x n
  double nominal_cost = 0.0;           // task + control cost of the updated mean
};

namespace detail {

inline Mat noise_factor(const Mat& cov) {
  if (cov.isZero(0.0)) return Mat::Zero(cov.rows(), cov.cols());
  Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(cov)};
  if (llt.info() != Eigen::Success) throw ValidationError("noise covariance not positive definite");
  return Mat(llt.matrixL());
}

inline std::uint64_t noise_stream_id(int iteration, int sample) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(iteration)) << 32) |
         static_cast<std::uint32_t>(sample);
}

inline void fill_sample_noise(const Mat& factor, std::uint64_t seed, int iteration, int k, int horizon,
                              double* out) {
  const int m = static_cast<int>(factor.rows());
  GaussianStream stream(seed, StreamDomain::kMppiNoise, noise_stream_id(iteration, k));
  Vec z(m);
  for (int t = 0; t < horizon; ++t) {
    for (int c = 0; c < m; ++c) z(c) = stream.normal();
    const Vec w = factor * z;
    for (int c = 0; c < m; ++c) out[t * m + c] = w(c);
  }
}

/// Splits [0, count) into contiguous chunks and runs body(begin, end) on each.
template <class Body>
void parallel_chunks(int count, int workers, const Body& body) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    body(0, count);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const int begin = static_cast<int>(static_cast<long>(count) * w / workers);
    const int end = static_cast<int>(static_cast<long>(count) * (w + 1) / workers);
    threads.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& t : threads) t.join();
}

}  // namespace detail

/// i.i.d. N(0, Sigma_w) perturbations, a pure function of (seed, iteration, k, t).
inline NoiseTensor sample_noise(const MppiConfig& cfg, int iteration) {
  const int m = cfg.input_dim();
  NoiseTensor out{cfg.samples, cfg.horizon, m, {}};
  out.data.resize(static_cast<std::size_t>(cfg.samples) * cfg.horizon * m);
  const Mat factor = detail::noise_factor(cfg.noise_covariance);
  detail::parallel_chunks(cfg.samples, cfg.workers, [&](int begin, int end) {
    for (int k = begin; k < end; ++k) {
      detail::fill_sample_noise(factor, cfg.seed, iteration, k, cfg.horizon, out.sample(k));
    }
  });
  return out;
}

/// Simulates clamp(v_t + w_t) through the deterministic map into `states`
/// ((H+1) x n). Returns false if a state became non-finite.
inline bool rollout_into(const DiscreteDynamics& dyn, const StateVector& x0, const ControlSequence& v,
                         const double* noise, double* states) {
  const int n = dyn.base().state_dim();
  const int m = v.dim();
  const int horizon = v.horizon();
  StateVector x = x0;
  std::copy(x.data(), x.data() + n, states);
  ControlVector u(m);
  bool finite = true;
  for (int t = 0; t < horizon; ++t) {
    for (int c = 0; c < m; ++c) u(c) = v.controls(t, c) + (noise ? noise[t * m + c] : 0.0);
    x = dyn.step_nominal<double>(x, u);
    double* row = states + static_cast<std::ptrdiff_t>(t + 1) * n;
    std::copy(x.data(), x.data() + n, row);
    if (!x.allFinite()) {
      finite = false;
      std::fill(row, states + static_cast<std::ptrdiff_t>(horizon + 1) * n,
                std::numeric_limits<double>::quiet_NaN());
      break;
    }
  }
  return finite;
}

/// (H+1) x n trajectory under the perturbed, clamped controls.
inline Eigen::MatrixXd rollout(const DiscreteDynamics& dyn, const StateVector& x0,
                               const ControlSequence& v, const Eigen::MatrixXd& noise) {
  const int n = dyn.base().state_dim();
  if (x0.size() != n || v.dim() != dyn.base().input_dim()) {
    throw ValidationError("rollout: dimension mismatch");
  }
  if (noise.size() != 0 && (noise.rows() != v.horizon() || noise.cols() != v.dim())) {
    throw ValidationError("rollout: noise must be H x m");
  }
  // Row-major scratch so the layout matches RolloutView.
  std::vector<double> flat_noise;
  if (noise.size() != 0) {
    flat_noise.resize(static_cast<std::size_t>(noise.size()));
    for (int t = 0; t < noise.rows(); ++t) {
      for (int c = 0; c < noise.cols(); ++c) flat_noise[static_cast<std::size_t>(t * noise.cols() + c)] = noise(t, c);
    }
  }
  std::vector<double> states(static_cast<std::size_t>(v.horizon() + 1) * n);
  rollout_into(dyn, x0, v, flat_noise.empty() ? nullptr : flat_noise.data(), states.data());
  Eigen::MatrixXd out(v.horizon() + 1, n);
  for (int t = 0; t <= v.horizon(); ++t) {
    for (int i = 0; i < n; ++i) out(t, i) = states[static_cast<std::size_t>(t * n + i)];
  }
  return out;
}

/// sum_t (lambda/2) v_t^T Sigma_w^-1 v_t over the mean sequence. A singular
/// covariance uses its pseudo-inverse.
inline double control_cost(const ControlSequence& mean, const MppiConfig& cfg) {
  const Eigen::MatrixXd cov = cfg.noise_covariance;
  const Eigen::MatrixXd precision = cov.completeOrthogonalDecomposition().pseudoInverse();
  double sum = 0.0;
  for (int t = 0; t < mean.horizon(); ++t) {
    const Eigen::VectorXd v = mean.controls.row(t).transpose();
    sum += 0.5 * cfg.temperature * v.dot(precision * v);
  }
  return sum;
}

/// Task cost of one rollout plus the mean-sequence control penalty.
inline double sample_cost(const RolloutView& states, const ControlSequence& mean, const MppiConfig& cfg,
                          const TaskCostEvaluator& tasks) {
  return tasks(states) + control_cost(mean, cfg);
}

inline double sample_cost(const RolloutView& states, const ControlSequence& mean, const MppiConfig& cfg,
                          const TaskSet& tasks, const HistoryBuffer& history, double now, double dt) {
  TaskCostEvaluator eval(tasks, history, now, states.steps - 1, dt, states.pos);
  return sample_cost(states, mean, cfg, eval);
}

/// w_k proportional to exp(-(S_k - min S) / lambda); non-finite costs get zero weight.
inline std::vector<double> softmin_weights(const std::vector<double>& costs, double temperature) {
  if (!(temperature > 0.0)) throw ValidationError("softmin temperature must be > 0");
  double best = std::numeric_limits<double>::infinity();
  for (double c : costs) {
    if (std::isfinite(c)) best = std::min(best, c);
  }
  if (!std::isfinite(best)) throw NoFeasibleRollout("no feasible rollout: every sample cost is non-finite");
  std::vector<double> w(costs.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < costs.size(); ++k) {
    if (std::isfinite(costs[k])) {
      w[k] = std::exp(-(costs[k] - best) / temperature);
      total += w[k];
    }
  }
  for (double& x : w) x /= total;
  return w;
}

/// v'_t = clamp(v_t + sum_k w_k noise_k,t).
inline ControlSequence update_mean(const ControlSequence& v, const NoiseTensor& noise,
                                   const std::vector<double>& weights, const InputBounds& bounds) {
  if (noise.samples != static_cast<int>(weights.size()) || noise.horizon != v.horizon() ||
      noise.dim != v.dim()) {
    throw ValidationError("update_mean: shape mismatch");
  }
  ControlSequence out = v;
  const int m = v.dim();
  for (int t = 0; t < v.horizon(); ++t) {
    for (int c = 0; c < m; ++c) {
      double shift = 0.0;
      for (int k = 0; k < noise.samples; ++k) {
        if (weights[static_cast<std::size_t>(k)] != 0.0) shift += weights[static_cast<std::size_t>(k)] * noise.at(k, t, c);
      }
      out.controls(t, c) += shift;
    }
    const Vec clamped = bounds.clamp(out.at(t));
    out.controls.row(t) = clamped.transpose();
  }
  return out;
}

/// Drop the first control and repeat the last one.
inline ControlSequence receding_shift(const ControlSequence& v) {
  ControlSequence out = v;
  const int horizon = v.horizon();
  if (horizon <= 1) return out;
  out.controls.topRows(horizon - 1) = v.controls.bottomRows(horizon - 1);
  out.controls.row(horizon - 1) = v.controls.row(horizon - 1);
  return out;
}

/// Cost of the zero-noise rollout of `v` under the same objective the sampler uses.
inline double sequence_cost(const MppiConfig& cfg, const DiscreteDynamics& dyn, const StateVector& x0,
                            const ControlSequence& v, const TaskCostEvaluator& tasks,
                            Eigen::MatrixXd* trajectory = nullptr) {
  const int n = dyn.base().state_dim();
  std::vector<double> states(static_cast<std::size_t>(v.horizon() + 1) * n);
  const bool finite = rollout_into(dyn, x0, v, nullptr, states.data());
  if (trajectory) {
    trajectory->resize(v.horizon() + 1, n);
    for (int t = 0; t <= v.horizon(); ++t) {
      for (int i = 0; i < n; ++i) (*trajectory)(t, i) = states[static_cast<std::size_t>(t * n + i)];
    }
  }
  if (!finite) return std::numeric_limits<double>::infinity();
  const RolloutView view{states.data(), v.horizon() + 1, n, dyn.base().position()};
  return sample_cost(view, v, cfg, tasks);
}

/// Samples, rolls out and scores all K perturbations for one iteration.
inline RolloutBatch evaluate_batch(const MppiConfig& cfg, const DiscreteDynamics& dyn, const StateVector& x0,
                                   const ControlSequence& mean, const TaskCostEvaluator& tasks,
                                   int iteration) {
  const int n = dyn.base().state_dim();
  const int m = cfg.input_dim();
  const int steps = cfg.horizon + 1;
  RolloutBatch batch;
  batch.state_dim = n;
  batch.noises = NoiseTensor{cfg.samples, cfg.horizon, m, {}};
  batch.noises.data.resize(static_cast<std::size_t>(cfg.samples) * cfg.horizon * m);
  batch.states.resize(static_cast<std::size_t>(cfg.samples) * steps * n);
  batch.costs.resize(static_cast<std::size_t>(cfg.samples));
  const Mat factor = detail::noise_factor(cfg.noise_covariance);
  const double penalty = control_cost(mean, cfg);
  const PositionIndices pos = dyn.base().position();

  detail::parallel_chunks(cfg.samples, cfg.workers, [&](int begin, int end) {
    for (int k = begin; k < end; ++k) {
      double* noise = batch.noises.sample(k);
      detail::fill_sample_noise(factor, cfg.seed, iteration, k, cfg.horizon, noise);
      double* states = batch.states.data() + static_cast<std::ptrdiff_t>(k) * steps * n;
      const bool finite = rollout_into(dyn, x0, mean, noise, states);
      double cost = std::numeric_limits<double>::infinity();
      if (finite) {
        cost = tasks(RolloutView{states, steps, n, pos}) + penalty;
        if (!std::isfinite(cost)) cost = std::numeric_limits<double>::infinity();
      }
      batch.costs[static_cast<std::size_t>(k)] = cost;
    }
  });
  return batch;
}

/// Receives every sampled batch with its weights (for rollout dumps).
using BatchObserver = std::function<void(const RolloutBatch&, const std::vector<double>& weights)>;

/// One MPPI cycle of cfg.iterations sampling iterations starting from
/// `warm_start`. Iteration indices cycle*iterations .. cycle*iterations+iterations-1
/// select the noise streams.
inline MppiSolution solve(const MppiConfig& cfg, const DiscreteDynamics& dyn, const StateVector& x0,
                          const TaskSet& tasks, const HistoryBuffer& history, double now,
                          const ControlSequence& warm_start, int cycle = 0,
                          const BatchObserver& observer = nullptr) {
  cfg.validate();
  if (warm_start.horizon() != cfg.horizon || warm_start.dim() != cfg.input_dim()) {
    throw ValidationError("warm start must be H x m");
  }
  if (dyn.base().input_dim() != cfg.input_dim() || x0.size() != dyn.base().state_dim()) {
    throw ValidationError("mppi: model dimension mismatch");
  }
  const TaskCostEvaluator evaluator(tasks, history, now, cfg.horizon, dyn.dt(), dyn.base().position());
  MppiSolution sol;
  sol.mean = warm_start;
  for (int i = 0; i < cfg.iterations; ++i) {
    const int iteration = cycle * cfg.iterations + i;
    RolloutBatch batch = evaluate_batch(cfg, dyn, x0, sol.mean, evaluator, iteration);
    sol.weights = softmin_weights(batch.costs, cfg.temperature);
    if (observer) observer(batch, sol.weights);
    sol.mean = update_mean(sol.mean, batch.noises, sol.weights, cfg.control_bounds);
  }
  sol.nominal_cost = sequence_cost(cfg, dyn, x0, sol.mean, evaluator, &sol.nominal_trajectory);
  return sol;
}

/// Receding-horizon wrapper: keeps the warm start and cycle counter.
class MppiPlanner {
 public:
  MppiPlanner(MppiConfig cfg, DiscreteDynamics dyn)
      : cfg_(std::move(cfg)), dyn_(std::move(dyn)),
        warm_(ControlSequence::zeros(cfg_.horizon, cfg_.input_dim())) {
    cfg_.validate();
  }

  const MppiSolution& plan(const StateVector& x0, const TaskSet& tasks, const HistoryBuffer& history,
                           double now, const BatchObserver& observer = nullptr) {
    last_ = solve(cfg_, dyn_, x0, tasks, history, now, warm_, cycle_, observer);
    warm_ = receding_shift(last_.mean);
    ++cycle_;
    return last_;
  }

  const MppiConfig& config() const { return cfg_; }
  const DiscreteDynamics& dynamics() const { return dyn_; }
  int cycle() const { return cycle_; }

 private:
  MppiConfig cfg_;
  DiscreteDynamics dyn_;
  ControlSequence warm_;
  MppiSolution last_;
  int cycle_ = 0;
};

}  // namespace safe_mppi
