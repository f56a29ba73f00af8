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

#include "transopt/calibration.h"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "transopt/error.h"

namespace transopt {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

}  // namespace

std::string to_string(CalibrationMode mode) {
  return mode == CalibrationMode::kLatent ? "latent" : "full";
}

CalibrationMode calibration_mode_from_string(const std::string& name) {
  if (name == "latent") return CalibrationMode::kLatent;
  if (name == "full" || name == "full-space") return CalibrationMode::kFullSpace;
  throw ConfigError(
      fmt::format("unknown calibration mode '{}' (latent | full)", name));
}

void CalibrationConfig::validate() const {
  assignment.validate();
  training.validate();
  if (unknown_pair_count < 1) {
    throw ConfigError("calibration: unknown_pair_count must be >= 1");
  }
  if (!(upper_bound > lower_bound)) {
    throw ConfigError("calibration: upper_bound must exceed lower_bound");
  }
  if (initial_design_size < 2) {
    throw ConfigError("calibration: initial_design_size must be >= 2");
  }
  if (evaluation_budget < initial_design_size) {
    throw ConfigError(fmt::format(
        "calibration: budget {} is smaller than the initial design {}",
        evaluation_budget, initial_design_size));
  }
  if (batch_size < 1) throw ConfigError("calibration: batch_size must be >= 1");
  if (retrain_interval < 1) {
    throw ConfigError("calibration: retrain_interval must be >= 1");
  }
  if (noise_sigma < 0.0) throw ConfigError("calibration: noise_sigma < 0");
  if (noise_replications < 1) {
    throw ConfigError("calibration: noise_replications must be >= 1");
  }
  if (!(demand_scale > 0.0)) {
    throw ConfigError("calibration: demand_scale must be > 0");
  }
  if (architecture.latent_dim == 0) {
    throw ConfigError("calibration: latent_dim must be >= 1");
  }
}

DemandSimulator::DemandSimulator(const Network& net, OdMatrix base_od,
                                 std::vector<OdPair> unknown_pairs,
                                 AssignmentConfig cfg, double noise_sigma,
                                 int replications)
    : net_(&net),
      base_(std::move(base_od)),
      unknown_(std::move(unknown_pairs)),
      cfg_(cfg),
      noise_sigma_(noise_sigma),
      replications_(std::max(1, replications)) {}

OdMatrix DemandSimulator::demand_for(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != unknown_.size()) {
    throw ConfigError(fmt::format("candidate has {} entries, expected {}",
                                  theta.size(), unknown_.size()));
  }
  OdMatrix od = base_;
  for (std::size_t i = 0; i < unknown_.size(); ++i) {
    od.set(unknown_[i].first, unknown_[i].second,
           std::max(0.0, theta[static_cast<Eigen::Index>(i)]));
  }
  return od;
}

std::vector<double> DemandSimulator::noiseless_times(
    const Eigen::VectorXd& theta) const {
  return solve_user_equilibrium(*net_, demand_for(theta), cfg_).link_times;
}

std::vector<double> DemandSimulator::arc_times(const Eigen::VectorXd& theta,
                                               std::uint64_t seed) const {
  const std::vector<double> base = noiseless_times(theta);
  if (replications_ == 1) return perturb_times(*net_, base, noise_sigma_, seed);
  std::vector<double> mean(base.size(), 0.0);
  for (int r = 0; r < replications_; ++r) {
    const auto draw = perturb_times(*net_, base, noise_sigma_,
                                    r == 0 ? seed : mix(seed, r));
    for (std::size_t a = 0; a < mean.size(); ++a) mean[a] += draw[a];
  }
  for (double& v : mean) v /= replications_;
  return mean;
}

double mean_relative_discrepancy(std::span<const double> simulated,
                                 std::span<const double> truth) {
  if (simulated.size() != truth.size() || truth.empty()) {
    throw ConfigError("discrepancy needs equal, non-empty time vectors");
  }
  double total = 0.0;
  for (std::size_t a = 0; a < truth.size(); ++a) {
    total += std::abs(simulated[a] - truth[a]) / truth[a];
  }
  return total / static_cast<double>(truth.size());
}

Evaluation evaluate_candidate(const Eigen::VectorXd& theta,
                              std::span<const double> true_times,
                              const DemandSimulator& sim, std::uint64_t seed) {
  Evaluation e;
  e.theta = theta;
  e.arc_times = sim.arc_times(theta, seed);
  e.objective = mean_relative_discrepancy(e.arc_times, true_times);
  return e;
}

double calibration_objective(const Eigen::VectorXd& theta,
                             std::span<const double> true_times,
                             const DemandSimulator& sim, std::uint64_t seed) {
  return evaluate_candidate(theta, true_times, sim, seed).objective;
}

Eigen::MatrixXd latin_hypercube_design(const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper, int n,
                                       std::uint64_t seed) {
  if (n < 2) throw ConfigError("latin_hypercube_design needs n >= 2");
  if (lower.size() != upper.size()) {
    throw ConfigError("latin_hypercube_design: bound sizes differ");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Index d = lower.size();
  Eigen::MatrixXd design(n, d);
  std::vector<int> strata(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < d; ++j) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    for (int i = 0; i < n; ++i) {
      const double u = (strata[static_cast<std::size_t>(i)] + unit(rng)) / n;
      design(i, j) = lower[j] + std::min(u, 1.0) * (upper[j] - lower[j]);
    }
  }
  return design;
}

std::uint64_t evaluation_seed(std::uint64_t run_seed, std::size_t index) {
  return mix(run_seed, 0x5eed0000ULL + index);
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn) {
  std::size_t workers =
      threads > 0 ? static_cast<std::size_t>(threads)
                  : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

struct RunContext {
  const CalibrationConfig& cfg;
  const DemandSimulator& sim;
  CalibrationState& state;
};

void evaluate_batch(RunContext& ctx, const std::vector<Eigen::VectorXd>& thetas,
                    const std::vector<Eigen::VectorXd>& coords) {
  const std::size_t offset = ctx.state.evaluated.size();
  std::vector<Evaluation> results(thetas.size());
  parallel_for(thetas.size(), ctx.cfg.threads, [&](std::size_t i) {
    results[i] = evaluate_candidate(thetas[i], ctx.state.true_times, ctx.sim,
                                    evaluation_seed(ctx.cfg.seed, offset + i));
    results[i].coords = coords[i];
  });
  for (auto& r : results) ctx.state.evaluated.push_back(std::move(r));
}

void refresh_best(CalibrationState& state) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < state.evaluated.size(); ++i) {
    if (state.evaluated[i].objective < state.evaluated[best].objective) best = i;
  }
  state.best_index = best;
  state.best_objective = state.evaluated[best].objective;
  state.best_theta = state.evaluated[best].theta;
}

Eigen::VectorXd to_unit_box(const Eigen::VectorXd& theta, double lo, double hi) {
  return ((theta.array() - lo) * (2.0 / (hi - lo)) - 1.0).matrix();
}

Eigen::VectorXd from_unit_box(const Eigen::VectorXd& u, double lo, double hi) {
  return ((u.array() + 1.0) * (0.5 * (hi - lo)) + lo)
      .cwiseMax(lo)
      .cwiseMin(hi)
      .matrix();
}

}  // namespace

CalibrationState run_calibration(const CalibrationConfig& cfg,
                                 const Network& net, const OdMatrix& base_od,
                                 CalibrationMode mode) {
  cfg.validate();
  const OdMatrix od = base_od.scaled(cfg.demand_scale);
  const std::vector<OdPair> all_pairs = od.pairs();
  const auto p = static_cast<std::size_t>(cfg.unknown_pair_count);
  if (all_pairs.size() < p) {
    throw ConfigError(fmt::format("demand has {} pairs, {} requested unknown",
                                  all_pairs.size(), p));
  }

  CalibrationState state;
  state.mode = mode;
  state.unknown_pairs.assign(all_pairs.begin(), all_pairs.begin() + p);
  state.true_theta.resize(static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i) {
    state.true_theta[static_cast<Eigen::Index>(i)] =
        od.get(state.unknown_pairs[i].first, state.unknown_pairs[i].second);
  }
  state.true_times = solve_user_equilibrium(net, od, cfg.assignment).link_times;

  const DemandSimulator sim(net, od, state.unknown_pairs, cfg.assignment,
                            cfg.noise_sigma, cfg.noise_replications);
  RunContext ctx{cfg, sim, state};

  const Eigen::VectorXd lower =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), cfg.lower_bound);
  const Eigen::VectorXd upper =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), cfg.upper_bound);

  // The initial design is shared by both modes for a given seed.
  const Eigen::MatrixXd design =
      latin_hypercube_design(lower, upper, cfg.initial_design_size, cfg.seed);
  {
    std::vector<Eigen::VectorXd> thetas;
    std::vector<Eigen::VectorXd> coords;
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
      thetas.push_back(design.row(i).transpose());
      coords.push_back(
          to_unit_box(thetas.back(), cfg.lower_bound, cfg.upper_bound));
    }
    evaluate_batch(ctx, thetas, coords);
  }
  refresh_best(state);
  state.trace.push_back({0, static_cast<int>(state.evaluated.size()),
                         state.best_objective});

  const std::size_t links = net.link_count();
  bool have_metamodel = false;
  for (int iteration = 1;
       static_cast<int>(state.evaluated.size()) < cfg.evaluation_budget;
       ++iteration) {
    const int q = std::min(cfg.batch_size,
                           cfg.evaluation_budget -
                               static_cast<int>(state.evaluated.size()));
    const auto n = static_cast<Eigen::Index>(state.evaluated.size());

    if (mode == CalibrationMode::kLatent &&
        (!have_metamodel || (iteration - 1) % cfg.retrain_interval == 0)) {
      Eigen::MatrixXd inputs(static_cast<Eigen::Index>(p), n);
      Eigen::MatrixXd outputs(static_cast<Eigen::Index>(links), n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Evaluation& e = state.evaluated[static_cast<std::size_t>(i)];
        inputs.col(i) = e.theta;
        outputs.col(i) = Eigen::Map<const Eigen::VectorXd>(
            e.arc_times.data(), static_cast<Eigen::Index>(links));
      }
      CombinedNetwork start =
          have_metamodel
              ? state.metamodel
              : CombinedNetwork::create(lower, upper, links, cfg.architecture,
                                        mix(cfg.seed, 0xe4c0de));
      TrainConfig training = cfg.training;
      training.seed = mix(cfg.training.seed, iteration);
      state.metamodel =
          train_combined(std::move(start), inputs, outputs, training).network;
      have_metamodel = true;
      ++state.metamodel_fits;
    }

    const Eigen::Index dim = mode == CalibrationMode::kLatent
                                 ? static_cast<Eigen::Index>(
                                       state.metamodel.latent_dim())
                                 : static_cast<Eigen::Index>(p);
    Eigen::MatrixXd points(n, dim);
    Eigen::VectorXd values(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Evaluation& e = state.evaluated[static_cast<std::size_t>(i)];
      points.row(i) = mode == CalibrationMode::kLatent
                          ? state.metamodel.encode(e.theta).transpose()
                          : to_unit_box(e.theta, cfg.lower_bound,
                                        cfg.upper_bound)
                                .transpose();
      values[i] = e.objective;
    }
    const double mean = values.mean();
    double sd = std::sqrt((values.array() - mean).square().mean());
    if (!(sd > 1e-12)) sd = 1.0;
    const Eigen::VectorXd standardized = (values.array() - mean) / sd;

    const GaussianProcess gp = gp_fit(points, standardized, cfg.grid);
    const Eigen::VectorXd box_lo = Eigen::VectorXd::Constant(dim, -1.0);
    const Eigen::VectorXd box_hi = Eigen::VectorXd::Constant(dim, 1.0);
    const Eigen::MatrixXd proposals =
        propose_batch(gp, q, box_lo, box_hi, mix(cfg.seed, 0xb0000 + iteration),
                      cfg.proposal);

    std::vector<Eigen::VectorXd> thetas;
    std::vector<Eigen::VectorXd> coords;
    for (Eigen::Index k = 0; k < proposals.rows(); ++k) {
      const Eigen::VectorXd z = proposals.row(k).transpose();
      coords.push_back(z);
      thetas.push_back(mode == CalibrationMode::kLatent
                           ? state.metamodel.decode(z)
                           : from_unit_box(z, cfg.lower_bound, cfg.upper_bound));
    }
    evaluate_batch(ctx, thetas, coords);
    refresh_best(state);
    state.trace.push_back({iteration, static_cast<int>(state.evaluated.size()),
                           state.best_objective});
  }
  return state;
}

}  // namespace transopt
