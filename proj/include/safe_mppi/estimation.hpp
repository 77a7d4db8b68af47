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

// Linear sensors and Gaussian state estimators (EKF and UKF). The EKF
// linearises the discrete dynamics with dual-number Jacobians, so any model
// built from generic callables gets an estimator without hand derivatives.

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "safe_mppi/dynamics.hpp"
#include "safe_mppi/errors.hpp"
#include "safe_mppi/random.hpp"

namespace safe_mppi {

/// Continuous observation dy = C x dt + D dv sampled every dt as
/// y_k = C x_k + eta with eta ~ N(0, D D^T / dt).
struct SensorModel {
  Mat observation_matrix;  // C, p x n
  Mat noise_matrix;        // D, p x r
  double dt = 0.05;
  std::uint64_t seed = 0;

  static SensorModel perfect(int n, double dt) { return {Mat::Identity(n, n), Mat::Zero(n, n), dt, 0}; }

  int measurement_dim() const { return static_cast<int>(observation_matrix.rows()); }

  Mat measurement_covariance() const { return noise_matrix * noise_matrix.transpose() / dt; }

  bool noiseless() const { return noise_matrix.isZero(0.0); }

  void validate(int n) const {
    if (observation_matrix.cols() != n) throw ValidationError("sensor C must have n columns");
    if (noise_matrix.rows() != observation_matrix.rows()) throw ValidationError("sensor D must have p rows");
    if (!(dt > 0.0)) throw ValidationError("sensor dt must be > 0");
  }
};

struct GaussianBelief {
  Vec mean;
  Mat covariance;

  void validate() const {
    if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
      throw ValidationError("belief covariance shape mismatch");
    }
  }
};

inline Vec sense(const SensorModel& sensor, const StateVector& x, GaussianStream& noise) {
  Vec y = sensor.observation_matrix * x;
  if (sensor.noiseless()) return y;
  const int r = static_cast<int>(sensor.noise_matrix.cols());
  Vec z(r);
  for (int i = 0; i < r; ++i) z(i) = noise.normal();
  y += sensor.noise_matrix * z / std::sqrt(sensor.dt);
  return y;
}

/// sigma(mean) sigma(mean)^T dt.
inline Mat sde_process_noise(const StochasticModel& sde, const Vec& mean, double dt) {
  const Mat sigma = sde.diffusion(mean);
  return sigma * sigma.transpose() * dt;
}

namespace detail {

/// Symmetrises in place; reports whether the asymmetry exceeded tolerance.
inline bool resymmetrize(Mat& p, double tol = 1e-12) {
  const double asym = (p - p.transpose()).cwiseAbs().maxCoeff();
  p = (0.5 * (p + p.transpose())).eval();
  return asym > tol * std::max(1.0, p.cwiseAbs().maxCoeff());
}

inline void note(std::vector<std::string>* events, const std::string& what) {
  if (events) events->push_back(what);
}

}  // namespace detail

inline GaussianBelief ekf_predict(const GaussianBelief& belief, const DiscreteDynamics& dyn, const ControlVector& u,
                                  const Mat& process_noise, std::vector<std::string>* events = nullptr) {
  belief.validate();
  const Mat a = discrete_jacobian(dyn, belief.mean, u);
  GaussianBelief out;
  out.mean = dyn.step_nominal<double>(belief.mean, u);
  out.covariance = a * belief.covariance * a.transpose() + process_noise;
  if (detail::resymmetrize(out.covariance)) detail::note(events, "ekf_predict: covariance re-symmetrized");
  return out;
}

inline Mat innovation_inverse(const Mat& s) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt{Eigen::MatrixXd(s)};
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-14 * scale) {
    std::ostringstream os;
    os << "degenerate measurement: innovation covariance is singular\n" << s;
    throw DegenerateMeasurement(os.str());
  }
  return Mat(ldlt.solve(Eigen::MatrixXd::Identity(s.rows(), s.cols())));
}

/// Kalman update with the Joseph-form covariance.
inline GaussianBelief ekf_update(const GaussianBelief& belief, const SensorModel& sensor, const Vec& y,
                                 std::vector<std::string>* events = nullptr) {
  belief.validate();
  const Mat& c = sensor.observation_matrix;
  const Mat r = sensor.measurement_covariance();
  const Mat& p = belief.covariance;
  const Mat s = c * p * c.transpose() + r;
  const Mat k = p * c.transpose() * innovation_inverse(s);
  GaussianBelief out;
  out.mean = belief.mean + k * (y - c * belief.mean);
  const Mat ikc = Mat::Identity(p.rows(), p.cols()) - k * c;
  out.covariance = ikc * p * ikc.transpose() + k * r * k.transpose();
  if (detail::resymmetrize(out.covariance)) detail::note(events, "ekf_update: covariance re-symmetrized");
  return out;
}

struct UkfParams {
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa = 0.0;
};

struct SigmaPoints {
  std::vector<Vec> points;
  std::vector<double> mean_weights;
  std::vector<double> cov_weights;
};

/// Lower factor of a PSD matrix; Cholesky when definite, eigen square root otherwise.
inline Mat psd_sqrt(const Mat& p) {
  Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(p)};
  if (llt.info() == Eigen::Success) return Mat(llt.matrixL());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{Eigen::MatrixXd(p)};
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    std::ostringstream os;
    os << "covariance square root failed: matrix is not positive semidefinite\n" << p;
    throw NonPsdCovariance(os.str());
  }
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return Mat(eig.eigenvectors() * root.asDiagonal());
}

inline SigmaPoints sigma_points(const GaussianBelief& belief, const UkfParams& params) {
  const int n = static_cast<int>(belief.mean.size());
  const double lambda = params.alpha * params.alpha * (n + params.kappa) - n;
  const Mat root = psd_sqrt((n + lambda) * belief.covariance);
  SigmaPoints sp;
  sp.points.reserve(static_cast<std::size_t>(2 * n + 1));
  sp.points.push_back(belief.mean);
  for (int i = 0; i < n; ++i) sp.points.push_back(belief.mean + root.col(i));
  for (int i = 0; i < n; ++i) sp.points.push_back(belief.mean - root.col(i));
  const double w0 = lambda / (n + lambda);
  const double wi = 1.0 / (2.0 * (n + lambda));
  sp.mean_weights.assign(static_cast<std::size_t>(2 * n + 1), wi);
  sp.cov_weights.assign(static_cast<std::size_t>(2 * n + 1), wi);
  sp.mean_weights[0] = w0;
  sp.cov_weights[0] = w0 + (1.0 - params.alpha * params.alpha + params.beta);
  return sp;
}

/// Unscented transform of the belief through an arbitrary map.
template <class Map>
GaussianBelief unscented_transform(const GaussianBelief& belief, const Map& map, const UkfParams& params) {
  const SigmaPoints sp = sigma_points(belief, params);
  std::vector<Vec> mapped;
  mapped.reserve(sp.points.size());
  for (const Vec& x : sp.points) mapped.push_back(map(x));
  Vec mean = Vec::Zero(mapped[0].size());
  for (std::size_t i = 0; i < mapped.size(); ++i) mean += sp.mean_weights[i] * mapped[i];
  Mat cov = Mat::Zero(mean.size(), mean.size());
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    const Vec d = mapped[i] - mean;
    cov += sp.cov_weights[i] * d * d.transpose();
  }
  return {mean, cov};
}

inline GaussianBelief ukf_predict(const GaussianBelief& belief, const DiscreteDynamics& dyn, const ControlVector& u,
                                  const Mat& process_noise, const UkfParams& params = {},
                                  std::vector<std::string>* events = nullptr) {
  belief.validate();
  GaussianBelief out = unscented_transform(
      belief, [&](const Vec& x) { return Vec(dyn.step_nominal<double>(x, u)); }, params);
  out.covariance += process_noise;
  if (detail::resymmetrize(out.covariance)) detail::note(events, "ukf_predict: covariance re-symmetrized");
  return out;
}

inline GaussianBelief ukf_update(const GaussianBelief& belief, const SensorModel& sensor, const Vec& y,
                                 const UkfParams& params = {}, std::vector<std::string>* events = nullptr) {
  belief.validate();
  const SigmaPoints sp = sigma_points(belief, params);
  const Mat& c = sensor.observation_matrix;
  const int p = sensor.measurement_dim();
  const int n = static_cast<int>(belief.mean.size());
  std::vector<Vec> z;
  z.reserve(sp.points.size());
  for (const Vec& x : sp.points) z.push_back(c * x);
  Vec z_mean = Vec::Zero(p);
  for (std::size_t i = 0; i < z.size(); ++i) z_mean += sp.mean_weights[i] * z[i];
  Mat s = sensor.measurement_covariance();
  Mat cross = Mat::Zero(n, p);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const Vec dz = z[i] - z_mean;
    s += sp.cov_weights[i] * dz * dz.transpose();
    cross += sp.cov_weights[i] * (sp.points[i] - belief.mean) * dz.transpose();
  }
  const Mat k = cross * innovation_inverse(s);
  GaussianBelief out;
  out.mean = belief.mean + k * (y - z_mean);
  out.covariance = belief.covariance - k * s * k.transpose();
  if (detail::resymmetrize(out.covariance)) detail::note(events, "ukf_update: covariance re-symmetrized");
  return out;
}

}  // namespace safe_mppi
