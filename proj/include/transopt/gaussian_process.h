// Copyright 2026 The TransOpt Authors.
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

// Gaussian-process surrogate with a squared-exponential kernel, expected
// improvement, and constant-liar batch proposals over a box.

#ifndef TRANSOPT_GAUSSIAN_PROCESS_H_
#define TRANSOPT_GAUSSIAN_PROCESS_H_

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace transopt {

struct GpKernel {
  double signal_variance = 1.0;
  double length_scale = 1.0;
  double noise_variance = 1e-6;

  // sigma_f^2 * exp(-|a - b|^2 / (2 l^2))
  double operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
};

// Log-spaced hyperparameter grids searched by gp_fit.
struct GpGrid {
  double length_scale_min = 0.05;
  double length_scale_max = 5.0;
  int length_scale_steps = 10;
  double signal_variance_min = 0.05;
  double signal_variance_max = 20.0;
  int signal_variance_steps = 10;
  double noise_variance_min = 1e-6;
  double noise_variance_max = 0.5;
  int noise_variance_steps = 5;

  static std::vector<double> log_space(double lo, double hi, int steps);
};

// Points are the rows of `points`. The prior mean is the sample mean of
// the training values.
class GaussianProcess {
 public:
  struct Posterior {
    double mean = 0.0;
    double variance = 0.0;
  };

  GaussianProcess() = default;
  // Exact conditioning with a fixed kernel. Throws NumericError when the
  // covariance cannot be factorized even after jitter escalation.
  GaussianProcess(Eigen::MatrixXd points, Eigen::VectorXd values,
                  GpKernel kernel);

  const Eigen::MatrixXd& points() const { return points_; }
  const Eigen::VectorXd& values() const { return values_; }
  const GpKernel& kernel() const { return kernel_; }
  double prior_mean() const { return prior_mean_; }
  double jitter() const { return jitter_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }

  // Latent-function posterior; variance clamped at zero.
  Posterior posterior(const Eigen::VectorXd& z) const;

  // Same kernel, one more observation (refactorized).
  GaussianProcess with_observation(const Eigen::VectorXd& z,
                                   double value) const;

  double log_marginal_likelihood() const;

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd values_;
  GpKernel kernel_;
  double prior_mean_ = 0.0;
  double jitter_ = 0.0;
  Eigen::MatrixXd cholesky_;  // lower factor of K + (noise + jitter) I
  Eigen::VectorXd alpha_;     // (K + noise I)^-1 (values - prior_mean)
};

// Selects the kernel maximizing the log marginal likelihood over `grid`
// (ties keep the earliest grid point, smallest values first), then
// conditions on (points, values). Requires at least two points.
GaussianProcess gp_fit(const Eigen::MatrixXd& points,
                       const Eigen::VectorXd& values, const GpGrid& grid = {});

// Expected improvement below `best` for a Gaussian with the given mean and
// standard deviation; zero when stddev is zero.
double expected_improvement(double mean, double stddev, double best);
double expected_improvement(const GaussianProcess& gp, const Eigen::VectorXd& z,
                            double best);

struct ProposalConfig {
  int starts = 64;
  int evaluations_per_start = 200;
  double min_separation = 1e-6;
};

// Sequential constant-liar batch: maximize EI by seeded multi-start compass
// search inside [lower, upper]; after each pick, add its posterior mean as
// a pseudo-observation (kernel fixed) and repeat. Returned rows are q
// points, pairwise at least `min_separation` apart.
Eigen::MatrixXd propose_batch(const GaussianProcess& gp, int q,
                              const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper, std::uint64_t seed,
                              const ProposalConfig& cfg = {});

}  // namespace transopt

#endif  // TRANSOPT_GAUSSIAN_PROCESS_H_
