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

// Deep Q-learning for the scheduling environment: replay buffer, frozen
// target network, epsilon-greedy exploration, and greedy policy reports.

#ifndef TRANSOPT_DQN_H_
#define TRANSOPT_DQN_H_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "transopt/neural.h"
#include "transopt/scheduling_env.h"

namespace transopt {

struct Transition {
  Eigen::VectorXd state;  // feature form
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool terminal = false;
};

class ReplayBuffer {
 public:
  // Throws ConfigError when capacity is zero.
  explicit ReplayBuffer(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return storage_.size(); }

  // Evicts the oldest transition when full.
  void push(Transition tr);
  // i-th oldest stored transition.
  const Transition& at(std::size_t i) const;

  // Uniform with replacement. Throws ConfigError if k > size() or k == 0.
  std::vector<Transition> sample(std::size_t k, std::mt19937_64& rng) const;
  std::vector<std::size_t> sample_indices(std::size_t k,
                                          std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot of the oldest entry once full
  std::vector<Transition> storage_;
};

struct DQNConfig {
  double gamma = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_steps = 1500;
  int target_update_interval = 100;
  int batch_size = 32;
  int buffer_capacity = 10000;
  double learning_rate = 3e-3;
  int updates_per_step = 4;  // replay minibatches per environment step
  int episodes = 100;
  std::vector<std::size_t> hidden{64, 64};
  std::uint64_t seed = 1;

  // Throws ConfigError.
  void validate() const;
};

// Linear decay from epsilon_start to epsilon_end over epsilon_decay_steps.
double epsilon_at(const DQNConfig& cfg, long step);

// features -> hidden (tanh) -> kActionCount (identity), Glorot initialized.
Mlp make_q_network(const DQNConfig& cfg, std::uint64_t seed);

// Lowest index among the maximal Q-values.
int greedy_action(const Mlp& qnet, const Eigen::VectorXd& features);
int epsilon_greedy(const Mlp& qnet, const Eigen::VectorXd& features,
                   double epsilon, std::mt19937_64& rng);

// r for terminal transitions, else r + gamma * max_a' target(s')[a'].
double dqn_target(const Transition& tr, const Mlp& target_net, double gamma);

struct TdLossResult {
  double loss = 0.0;
  MlpGradient gradient;
};

// Mean squared TD error over the batch with targets held fixed; only the
// taken action's output receives gradient. Throws ConfigError on an empty
// batch and NumericError on a non-finite loss.
TdLossResult td_loss_and_gradient(const Mlp& qnet, const Mlp& target_net,
                                  std::span<const Transition> batch,
                                  double gamma);

// One SGD step; returns the loss before the step.
double dqn_train_step(Mlp& qnet, const Mlp& target_net,
                      std::span<const Transition> batch, const DQNConfig& cfg);

struct DqnTrainResult {
  Mlp qnet;
  std::vector<double> episode_returns;
  long steps = 0;
};

// Trains on freshly drawn random profiles; deterministic given cfg.seed.
DqnTrainResult train_dqn(const EnvConfig& env_cfg, const DQNConfig& cfg);

using Policy = std::function<int(const ScheduleState&, const Eigen::VectorXd&)>;

Policy greedy_policy(const Mlp& qnet);
Policy null_policy();

struct PeriodReport {
  int period = 0;
  int original_demand = 0;
  int carried_in = 0;
  int arc12_flow = 0;
  int arc13_flow = 0;
  int delayed = 0;
  int action = 0;
  double original_travel_time = 0.0;  // whole original demand on 1 -> 2
  double adjusted_travel_time = 0.0;
};

struct PolicyReport {
  std::vector<PeriodReport> periods;
  double original_total = 0.0;
  double adjusted_total = 0.0;
  // 1 - adjusted_total / original_total; 0 when the original total is 0.
  double improvement = 0.0;
  // Mean of per-period 1 - adjusted / original over periods with positive
  // original travel time.
  double mean_period_improvement = 0.0;
};

PolicyReport evaluate_policy(const EnvConfig& env_cfg,
                             const std::vector<int>& profile,
                             const Policy& policy);

void to_json(nlohmann::json& j, const DQNConfig& cfg);
void from_json(const nlohmann::json& j, DQNConfig& cfg);

}  // namespace transopt

#endif  // TRANSOPT_DQN_H_
