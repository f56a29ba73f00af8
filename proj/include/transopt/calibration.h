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

// O-D demand calibration by Bayesian optimization, either directly over the
// (scaled) unknown demands or inside the latent space of a CombinedNetwork
// trained on the simulator runs gathered so far.

#ifndef TRANSOPT_CALIBRATION_H_
#define TRANSOPT_CALIBRATION_H_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "transopt/assignment.h"
#include "transopt/gaussian_process.h"
#include "transopt/network.h"
#include "transopt/neural.h"

namespace transopt {

enum class CalibrationMode { kFullSpace, kLatent };

std::string to_string(CalibrationMode mode);
CalibrationMode calibration_mode_from_string(const std::string& name);

struct CalibrationConfig {
  int unknown_pair_count = 20;
  double lower_bound = 0.0;
  double upper_bound = 7000.0;
  int initial_design_size = 40;
  int batch_size = 8;
  int evaluation_budget = 120;
  int retrain_interval = 5;  // batches between metamodel refits
  double noise_sigma = 0.05;
  int noise_replications = 1;  // noisy draws averaged per simulator call
  double demand_scale = 1.0;   // applied to the trips file before use
  std::uint64_t seed = 2018;
  int threads = 0;  // 0: hardware concurrency

  AssignmentConfig assignment;
  CombinedArchitecture architecture;
  TrainConfig training;
  GpGrid grid;
  ProposalConfig proposal;

  // Throws ConfigError.
  void validate() const;
};

// Wraps the equilibrium solver as a function of the unknown demands; the
// remaining O-D entries stay at their base values. Thread-safe.
class DemandSimulator {
 public:
  DemandSimulator(const Network& net, OdMatrix base_od,
                  std::vector<OdPair> unknown_pairs, AssignmentConfig cfg,
                  double noise_sigma, int replications = 1);

  const std::vector<OdPair>& unknown_pairs() const { return unknown_; }
  const Network& network() const { return *net_; }

  OdMatrix demand_for(const Eigen::VectorXd& theta) const;
  std::vector<double> noiseless_times(const Eigen::VectorXd& theta) const;
  // Equilibrium times with noise, averaged over the configured number of
  // replications (replication r uses a seed derived from (seed, r)).
  std::vector<double> arc_times(const Eigen::VectorXd& theta,
                                std::uint64_t seed) const;

 private:
  const Network* net_;
  OdMatrix base_;
  std::vector<OdPair> unknown_;
  AssignmentConfig cfg_;
  double noise_sigma_;
  int replications_;
};

// Mean over links of |simulated - truth| / truth.
double mean_relative_discrepancy(std::span<const double> simulated,
                                 std::span<const double> truth);

struct Evaluation {
  Eigen::VectorXd theta;   // original units
  Eigen::VectorXd coords;  // working-space coordinates when proposed
  std::vector<double> arc_times;
  double objective = 0.0;
};

Evaluation evaluate_candidate(const Eigen::VectorXd& theta,
                              std::span<const double> true_times,
                              const DemandSimulator& sim, std::uint64_t seed);

double calibration_objective(const Eigen::VectorXd& theta,
                             std::span<const double> true_times,
                             const DemandSimulator& sim, std::uint64_t seed);

// n points (rows); along every dimension each of the n equal strata holds
// exactly one point.
Eigen::MatrixXd latin_hypercube_design(const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper, int n,
                                       std::uint64_t seed);

struct TraceRow {
  int iteration = 0;  // 0 = initial design
  int evaluations = 0;
  double best_objective = 0.0;
};

struct CalibrationState {
  CalibrationMode mode = CalibrationMode::kLatent;
  std::vector<OdPair> unknown_pairs;
  Eigen::VectorXd true_theta;
  std::vector<double> true_times;
  std::vector<Evaluation> evaluated;
  std::size_t best_index = 0;
  double best_objective = 0.0;
  Eigen::VectorXd best_theta;
  std::vector<TraceRow> trace;
  int metamodel_fits = 0;
  CombinedNetwork metamodel;  // latent mode only
};

// Seed for the i-th simulator evaluation of a run.
std::uint64_t evaluation_seed(std::uint64_t run_seed, std::size_t index);

// Ground truth: the first unknown_pair_count nonzero pairs (lexicographic)
// of the scaled base demand, and one noiseless equilibrium of that demand.
CalibrationState run_calibration(const CalibrationConfig& cfg,
                                 const Network& net, const OdMatrix& base_od,
                                 CalibrationMode mode);

// Runs fn(0..n-1) on up to `threads` workers; fn must be thread-safe and
// write only to its own slot.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace transopt

#endif  // TRANSOPT_CALIBRATION_H_
