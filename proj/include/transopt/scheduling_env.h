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

// Demand-scheduling environment on a three-node network: every period,
// demand from node 1 to node 2 may be partly delayed to the next period or
// rerouted to the alternative destination node 3.

#ifndef TRANSOPT_SCHEDULING_ENV_H_
#define TRANSOPT_SCHEDULING_ENV_H_

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "json.hpp"
#include "transopt/network.h"

namespace transopt {

struct EnvConfig {
  Link link12{1, 1, 2, 2.0, 1.0, 1.0, 0.15, 4.0, 0.0, 0.0, 1};
  Link link13{2, 1, 3, 4.0, 2.0, 2.0, 0.15, 4.0, 0.0, 0.0, 1};
  int periods = 24;
  int max_demand = 4;  // random profiles draw uniformly from 0..max_demand
  double demand_normalizer = 4.0;
  double carried_normalizer = 2.0;
  double residual_normalizer = 4.0;
  bool use_equilibrium_solver = false;

  // Throws ConfigError.
  void validate() const;
};

struct ScheduleState {
  int t = 1;
  int current_demand = 0;
  int carried_demand = 0;
  double residual_rate = 0.0;

  friend bool operator==(const ScheduleState&, const ScheduleState&) = default;
};

inline constexpr int kMaxDelay = 2;
inline constexpr int kMaxReroute = 2;
inline constexpr int kActionCount = (kMaxDelay + 1) * (kMaxReroute + 1);

struct ScheduleAction {
  int delay = 0;
  int reroute = 0;

  int index() const { return 3 * delay + reroute; }
  // Throws ConfigError outside 0..kActionCount-1.
  static ScheduleAction from_index(int index);

  friend bool operator==(const ScheduleAction&, const ScheduleAction&) = default;
};

struct StepOutcome {
  // After the last period this is the zero state at t = periods.
  ScheduleState next;
  double reward = 0.0;  // negative vehicle-minutes
  bool terminal = false;
  int arc12_flow = 0;
  int arc13_flow = 0;
  int delayed = 0;
};

// Remaining demand after period t divided by max(1, periods - (t + 1)).
double residual_rate(const std::vector<int>& profile, int t);

// Vehicle-minutes spent by the given flows on the two links, either in
// closed form or through the equilibrium solver on the three-node network.
double period_travel_time(const EnvConfig& cfg, double arc12_flow,
                          double arc13_flow);

// Uniform integers 0..max_demand, one per period.
std::vector<int> random_profile(const EnvConfig& cfg, std::mt19937_64& rng);

class SchedulingEnv {
 public:
  // Throws ConfigError on an invalid configuration.
  explicit SchedulingEnv(EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }
  const std::vector<int>& profile() const { return profile_; }

  // Throws ConfigError when the profile length differs from the horizon
  // and ValidationError on negative demand.
  ScheduleState reset(std::vector<int> profile);

  // Requests beyond the available demand are clipped; nothing is rejected.
  StepOutcome step(const ScheduleState& s, ScheduleAction a) const;

  // [D_t, M_t, residual] divided by the configured normalizers.
  Eigen::VectorXd features(const ScheduleState& s) const;

 private:
  EnvConfig cfg_;
  std::vector<int> profile_;
};

void to_json(nlohmann::json& j, const EnvConfig& cfg);
void from_json(const nlohmann::json& j, EnvConfig& cfg);

}  // namespace transopt

#endif  // TRANSOPT_SCHEDULING_ENV_H_
