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

#include "transopt/dqn.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "transopt/error.h"

namespace transopt {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay buffer capacity must be > 0");
  storage_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayBuffer::push(Transition tr) {
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(tr));
    return;
  }
  storage_[head_] = std::move(tr);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= storage_.size()) {
    throw ConfigError(fmt::format("replay index {} beyond size {}", i,
                                  storage_.size()));
  }
  return storage_[(head_ + i) % storage_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(
    std::size_t k, std::mt19937_64& rng) const {
  if (k == 0 || k > storage_.size()) {
    throw ConfigError(fmt::format("cannot sample {} transitions from {}", k,
                                  storage_.size()));
  }
  std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
  std::vector<std::size_t> out(k);
  for (auto& i : out) i = pick(rng);
  return out;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t k,
                                             std::mt19937_64& rng) const {
  std::vector<Transition> out;
  out.reserve(k);
  for (const std::size_t i : sample_indices(k, rng)) out.push_back(at(i));
  return out;
}

void DQNConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw ConfigError(fmt::format("dqn gamma {} outside [0, 1)", gamma));
  }
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0) ||
      !(epsilon_end >= 0.0 && epsilon_end <= 1.0)) {
    throw ConfigError("dqn epsilon values must lie in [0, 1]");
  }
  if (epsilon_decay_steps < 1 || target_update_interval < 1 ||
      batch_size < 1 || buffer_capacity < 1 || updates_per_step < 1) {
    throw ConfigError(
        "dqn decay steps, target interval, batch size, buffer capacity and "
        "updates per step must be >= 1");
  }
  if (batch_size > buffer_capacity) {
    throw ConfigError("dqn batch_size exceeds buffer_capacity");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("dqn learning_rate must be > 0");
  if (episodes < 0) throw ConfigError("dqn episodes must be >= 0");
  if (std::find(hidden.begin(), hidden.end(), 0u) != hidden.end()) {
    throw ConfigError("dqn hidden widths must be > 0");
  }
}

double epsilon_at(const DQNConfig& cfg, long step) {
  const double frac =
      std::min(1.0, static_cast<double>(std::max(0L, step)) /
                        static_cast<double>(cfg.epsilon_decay_steps));
  return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
}

Mlp make_q_network(const DQNConfig& cfg, std::uint64_t seed) {
  std::vector<LayerSpec> layers;
  std::size_t width = 3;
  for (const std::size_t h : cfg.hidden) {
    layers.push_back({width, h, Activation::kTanh});
    width = h;
  }
  layers.push_back({width, static_cast<std::size_t>(kActionCount),
                    Activation::kIdentity});
  return Mlp::glorot(std::move(layers), seed);
}

int greedy_action(const Mlp& qnet, const Eigen::VectorXd& features) {
  const Eigen::VectorXd q = qnet.forward(features);
  Eigen::Index best = 0;
  for (Eigen::Index a = 1; a < q.size(); ++a) {
    if (q[a] > q[best]) best = a;
  }
  return static_cast<int>(best);
}

int epsilon_greedy(const Mlp& qnet, const Eigen::VectorXd& features,
                   double epsilon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (epsilon > 0.0 && unit(rng) < epsilon) {
    std::uniform_int_distribution<int> any(0, kActionCount - 1);
    return any(rng);
  }
  return greedy_action(qnet, features);
}

double dqn_target(const Transition& tr, const Mlp& target_net, double gamma) {
  if (tr.terminal || gamma == 0.0) return tr.reward;
  return tr.reward + gamma * target_net.forward(tr.next_state).maxCoeff();
}

TdLossResult td_loss_and_gradient(const Mlp& qnet, const Mlp& target_net,
                                  std::span<const Transition> batch,
                                  double gamma) {
  if (batch.empty()) throw ConfigError("dqn batch is empty");
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd states(static_cast<Eigen::Index>(qnet.input_width()), n);
  Eigen::VectorXd targets(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& tr = batch[static_cast<std::size_t>(i)];
    states.col(i) = tr.state;
    targets[i] = dqn_target(tr, target_net, gamma);
  }
  const Mlp::Trace trace = qnet.forward_trace(states);
  Eigen::MatrixXd output_grad =
      Eigen::MatrixXd::Zero(trace.output().rows(), n);
  TdLossResult result;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = batch[static_cast<std::size_t>(i)].action;
    const double err = trace.output()(a, i) - targets[i];
    result.loss += err * err;
    output_grad(a, i) = 2.0 * err / static_cast<double>(n);
  }
  result.loss /= static_cast<double>(n);
  if (!std::isfinite(result.loss)) {
    throw NumericError(fmt::format("dqn TD loss is {}", result.loss));
  }
  result.gradient = qnet.backward(trace, output_grad);
  return result;
}

double dqn_train_step(Mlp& qnet, const Mlp& target_net,
                      std::span<const Transition> batch, const DQNConfig& cfg) {
  TdLossResult r = td_loss_and_gradient(qnet, target_net, batch, cfg.gamma);
  qnet.apply_update(r.gradient, -cfg.learning_rate);
  return r.loss;
}

DqnTrainResult train_dqn(const EnvConfig& env_cfg, const DQNConfig& cfg) {
  cfg.validate();
  SchedulingEnv env(env_cfg);
  std::mt19937_64 rng(cfg.seed);
  DqnTrainResult result;
  result.qnet = make_q_network(cfg, rng());
  Mlp target = result.qnet;
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));

  for (int episode = 0; episode < cfg.episodes; ++episode) {
    ScheduleState s = env.reset(random_profile(env_cfg, rng));
    double episode_return = 0.0;
    while (true) {
      const Eigen::VectorXd f = env.features(s);
      const int action = epsilon_greedy(result.qnet, f,
                                        epsilon_at(cfg, result.steps), rng);
      const StepOutcome out = env.step(s, ScheduleAction::from_index(action));
      episode_return += out.reward;
      buffer.push({f, action, out.reward, env.features(out.next), out.terminal});
      if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
        for (int u = 0; u < cfg.updates_per_step; ++u) {
          const auto batch =
              buffer.sample(static_cast<std::size_t>(cfg.batch_size), rng);
          dqn_train_step(result.qnet, target, batch, cfg);
        }
      }
      ++result.steps;
      if (result.steps % cfg.target_update_interval == 0) target = result.qnet;
      if (out.terminal) break;
      s = out.next;
    }
    result.episode_returns.push_back(episode_return);
  }
  return result;
}

Policy greedy_policy(const Mlp& qnet) {
  return [qnet](const ScheduleState&, const Eigen::VectorXd& f) {
    return greedy_action(qnet, f);
  };
}

Policy null_policy() {
  return [](const ScheduleState&, const Eigen::VectorXd&) { return 0; };
}

PolicyReport evaluate_policy(const EnvConfig& env_cfg,
                             const std::vector<int>& profile,
                             const Policy& policy) {
  SchedulingEnv env(env_cfg);
  ScheduleState s = env.reset(profile);
  PolicyReport report;
  int improved_periods = 0;
  while (true) {
    const int action = policy(s, env.features(s));
    const StepOutcome out = env.step(s, ScheduleAction::from_index(action));
    PeriodReport row;
    row.period = s.t;
    row.original_demand = s.current_demand;
    row.carried_in = s.carried_demand;
    row.arc12_flow = out.arc12_flow;
    row.arc13_flow = out.arc13_flow;
    row.delayed = out.delayed;
    row.action = action;
    row.original_travel_time =
        period_travel_time(env_cfg, s.current_demand, 0.0);
    row.adjusted_travel_time = -out.reward;
    report.original_total += row.original_travel_time;
    report.adjusted_total += row.adjusted_travel_time;
    if (row.original_travel_time > 0.0) {
      report.mean_period_improvement +=
          1.0 - row.adjusted_travel_time / row.original_travel_time;
      ++improved_periods;
    }
    report.periods.push_back(row);
    if (out.terminal) break;
    s = out.next;
  }
  if (report.original_total > 0.0) {
    report.improvement = 1.0 - report.adjusted_total / report.original_total;
  }
  if (improved_periods > 0) report.mean_period_improvement /= improved_periods;
  return report;
}

void to_json(nlohmann::json& j, const DQNConfig& cfg) {
  j = nlohmann::json{{"gamma", cfg.gamma},
                     {"epsilon_start", cfg.epsilon_start},
                     {"epsilon_end", cfg.epsilon_end},
                     {"epsilon_decay_steps", cfg.epsilon_decay_steps},
                     {"target_update_interval", cfg.target_update_interval},
                     {"batch_size", cfg.batch_size},
                     {"buffer_capacity", cfg.buffer_capacity},
                     {"learning_rate", cfg.learning_rate},
                     {"updates_per_step", cfg.updates_per_step},
                     {"episodes", cfg.episodes},
                     {"hidden", cfg.hidden},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, DQNConfig& cfg) {
  DQNConfig out;
  out.gamma = j.value("gamma", out.gamma);
  out.epsilon_start = j.value("epsilon_start", out.epsilon_start);
  out.epsilon_end = j.value("epsilon_end", out.epsilon_end);
  out.epsilon_decay_steps = j.value("epsilon_decay_steps", out.epsilon_decay_steps);
  out.target_update_interval =
      j.value("target_update_interval", out.target_update_interval);
  out.batch_size = j.value("batch_size", out.batch_size);
  out.buffer_capacity = j.value("buffer_capacity", out.buffer_capacity);
  out.learning_rate = j.value("learning_rate", out.learning_rate);
  out.updates_per_step = j.value("updates_per_step", out.updates_per_step);
  out.episodes = j.value("episodes", out.episodes);
  out.hidden = j.value("hidden", out.hidden);
  out.seed = j.value("seed", out.seed);
  cfg = out;
}

}  // namespace transopt
