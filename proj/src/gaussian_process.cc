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

#include "transopt/gaussian_process.h"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include "transopt/error.h"

namespace transopt {

namespace {

constexpr double kInitialJitter = 1e-8;
constexpr double kMaxJitter = 1e-2;

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d2(i, j) = d2(j, i) = (points.row(i) - points.row(j)).squaredNorm();
    }
  }
  return d2;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& d2, const GpKernel& k) {
  const double inv = -0.5 / (k.length_scale * k.length_scale);
  Eigen::MatrixXd cov = k.signal_variance * (d2.array() * inv).exp().matrix();
  cov.diagonal().array() += k.noise_variance;
  return cov;
}

// Lower Cholesky factor of cov + jitter I, escalating jitter from zero.
std::optional<Eigen::MatrixXd> factorize(const Eigen::MatrixXd& cov,
                                         double* jitter) {
  double extra = 0.0;
  while (true) {
    Eigen::MatrixXd m = cov;
    m.diagonal().array() += extra;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
      *jitter = extra;
      return Eigen::MatrixXd(llt.matrixL());
    }
    extra = extra == 0.0 ? kInitialJitter : extra * 10.0;
    if (extra > kMaxJitter) return std::nullopt;
  }
}

double normal_pdf(double u) {
  return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

}  // namespace

double GpKernel::operator()(const Eigen::VectorXd& a,
                            const Eigen::VectorXd& b) const {
  return signal_variance *
         std::exp(-(a - b).squaredNorm() / (2.0 * length_scale * length_scale));
}

std::vector<double> GpGrid::log_space(double lo, double hi, int steps) {
  std::vector<double> out;
  if (steps <= 1) {
    out.push_back(lo);
    return out;
  }
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (int i = 0; i < steps; ++i) {
    out.push_back(std::exp(a + (b - a) * i / (steps - 1)));
  }
  return out;
}

GaussianProcess::GaussianProcess(Eigen::MatrixXd points, Eigen::VectorXd values,
                                 GpKernel kernel)
    : points_(std::move(points)), values_(std::move(values)), kernel_(kernel) {
  if (points_.rows() != values_.size() || values_.size() == 0) {
    throw ConfigError(fmt::format("GP needs matching, non-empty data ({} vs {})",
                                  points_.rows(), values_.size()));
  }
  if (!(kernel_.signal_variance > 0.0) || !(kernel_.length_scale > 0.0) ||
      !(kernel_.noise_variance > 0.0)) {
    throw ConfigError("GP kernel hyperparameters must be > 0");
  }
  prior_mean_ = values_.mean();
  auto factor = factorize(covariance(squared_distances(points_), kernel_),
                          &jitter_);
  if (!factor) {
    throw NumericError(fmt::format(
        "GP covariance not positive definite even with jitter {}", kMaxJitter));
  }
  cholesky_ = std::move(*factor);
  alpha_ = cholesky_.triangularView<Eigen::Lower>().solve(
      values_ - Eigen::VectorXd::Constant(values_.size(), prior_mean_));
  cholesky_.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha_);
}

GaussianProcess::Posterior GaussianProcess::posterior(
    const Eigen::VectorXd& z) const {
  if (z.size() != points_.cols()) {
    throw ConfigError(fmt::format("GP query has {} dims, expected {}", z.size(),
                                  points_.cols()));
  }
  const Eigen::Index n = points_.rows();
  const double inv = -0.5 / (kernel_.length_scale * kernel_.length_scale);
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k[i] = kernel_.signal_variance *
           std::exp((points_.row(i).transpose() - z).squaredNorm() * inv);
  }
  Posterior post;
  post.mean = prior_mean_ + k.dot(alpha_);
  const Eigen::VectorXd v = cholesky_.triangularView<Eigen::Lower>().solve(k);
  post.variance = std::max(0.0, kernel_.signal_variance - v.squaredNorm());
  return post;
}

GaussianProcess GaussianProcess::with_observation(const Eigen::VectorXd& z,
                                                  double value) const {
  Eigen::MatrixXd points(points_.rows() + 1, points_.cols());
  points << points_, z.transpose();
  Eigen::VectorXd values(values_.size() + 1);
  values << values_, value;
  return GaussianProcess(std::move(points), std::move(values), kernel_);
}

double GaussianProcess::log_marginal_likelihood() const {
  const double n = static_cast<double>(values_.size());
  const Eigen::VectorXd centered =
      values_ - Eigen::VectorXd::Constant(values_.size(), prior_mean_);
  return -0.5 * centered.dot(alpha_) -
         cholesky_.diagonal().array().log().sum() -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

GaussianProcess gp_fit(const Eigen::MatrixXd& points,
                       const Eigen::VectorXd& values, const GpGrid& grid) {
  if (points.rows() < 2 || points.rows() != values.size()) {
    throw ConfigError(fmt::format("gp_fit needs >= 2 matching points ({} vs {})",
                                  points.rows(), values.size()));
  }
  const Eigen::MatrixXd d2 = squared_distances(points);
  const Eigen::VectorXd centered =
      values - Eigen::VectorXd::Constant(values.size(), values.mean());
  const double n = static_cast<double>(values.size());

  double best_lml = -std::numeric_limits<double>::infinity();
  std::optional<GpKernel> best;
  for (const double ls : GpGrid::log_space(grid.length_scale_min,
                                           grid.length_scale_max,
                                           grid.length_scale_steps)) {
    for (const double sf : GpGrid::log_space(grid.signal_variance_min,
                                             grid.signal_variance_max,
                                             grid.signal_variance_steps)) {
      for (const double sn : GpGrid::log_space(grid.noise_variance_min,
                                               grid.noise_variance_max,
                                               grid.noise_variance_steps)) {
        const GpKernel kernel{sf, ls, sn};
        Eigen::LLT<Eigen::MatrixXd> llt(covariance(d2, kernel));
        if (llt.info() != Eigen::Success) continue;
        const Eigen::VectorXd a = llt.solve(centered);
        const double log_det_half =
            llt.matrixLLT().diagonal().array().log().sum();
        const double lml = -0.5 * centered.dot(a) - log_det_half -
                           0.5 * n * std::log(2.0 * std::numbers::pi);
        if (std::isfinite(lml) && lml > best_lml) {
          best_lml = lml;
          best = kernel;
        }
      }
    }
  }
  if (!best) {
    throw NumericError("gp_fit: no grid kernel gives a factorizable covariance");
  }
  return GaussianProcess(points, values, *best);
}

double expected_improvement(double mean, double stddev, double best) {
  if (!(stddev > 0.0)) return 0.0;
  const double u = (best - mean) / stddev;
  return std::max(0.0, (best - mean) * normal_cdf(u) + stddev * normal_pdf(u));
}

double expected_improvement(const GaussianProcess& gp, const Eigen::VectorXd& z,
                            double best) {
  const auto post = gp.posterior(z);
  return expected_improvement(post.mean, std::sqrt(post.variance), best);
}

namespace {

struct SearchResult {
  Eigen::VectorXd point;
  double value = 0.0;
};

// Compass search maximizing EI from `start`, clamped to the box.
SearchResult compass_search(const GaussianProcess& gp, double best,
                            Eigen::VectorXd start, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, int budget) {
  SearchResult result{std::move(start), 0.0};
  result.value = expected_improvement(gp, result.point, best);
  Eigen::VectorXd step = 0.25 * (upper - lower);
  int evals = 1;
  while (evals < budget) {
    bool improved = false;
    for (Eigen::Index i = 0; i < result.point.size() && !improved &&
                             evals < budget;
         ++i) {
      for (const double sign : {1.0, -1.0}) {
        Eigen::VectorXd candidate = result.point;
        candidate[i] =
            std::clamp(candidate[i] + sign * step[i], lower[i], upper[i]);
        if (candidate[i] == result.point[i]) continue;
        const double value = expected_improvement(gp, candidate, best);
        ++evals;
        if (value > result.value) {
          result.point = std::move(candidate);
          result.value = value;
          improved = true;
          break;
        }
        if (evals >= budget) break;
      }
    }
    if (!improved) {
      step *= 0.5;
      if (step.maxCoeff() < 1e-9) break;
    }
  }
  return result;
}

}  // namespace

Eigen::MatrixXd propose_batch(const GaussianProcess& gp, int q,
                              const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper, std::uint64_t seed,
                              const ProposalConfig& cfg) {
  if (q < 1) throw ConfigError("propose_batch needs q >= 1");
  const Eigen::Index d = lower.size();
  if (upper.size() != d || static_cast<std::size_t>(d) != gp.dim()) {
    throw ConfigError("propose_batch: box does not match GP dimension");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Eigen::MatrixXd batch(q, d);
  GaussianProcess working = gp;
  double best = gp.values().minCoeff();
  for (int pick = 0; pick < q; ++pick) {
    SearchResult winner;
    winner.value = -1.0;
    for (int s = 0; s < cfg.starts; ++s) {
      Eigen::VectorXd start(d);
      for (Eigen::Index i = 0; i < d; ++i) {
        start[i] = lower[i] + unit(rng) * (upper[i] - lower[i]);
      }
      SearchResult r = compass_search(working, best, std::move(start), lower,
                                      upper, cfg.evaluations_per_start);
      if (r.value > winner.value) winner = std::move(r);
    }
    Eigen::VectorXd point = std::move(winner.point);
    const auto too_close = [&](const Eigen::VectorXd& p) {
      for (int k = 0; k < pick; ++k) {
        if ((batch.row(k).transpose() - p).norm() < cfg.min_separation) {
          return true;
        }
      }
      return false;
    };
    while (too_close(point)) {
      for (Eigen::Index i = 0; i < d; ++i) {
        const double jitter = 10.0 * cfg.min_separation * (2.0 * unit(rng) - 1.0);
        point[i] = std::clamp(point[i] + jitter, lower[i], upper[i]);
      }
    }
    batch.row(pick) = point.transpose();
    if (pick + 1 < q) {
      const double liar = working.posterior(point).mean;
      working = working.with_observation(point, liar);
      best = std::min(best, liar);
    }
  }
  return batch;
}

}  // namespace transopt
