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

#include "transopt/scheduling_env.h"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "transopt/assignment.h"
#include "transopt/error.h"

namespace transopt {

void EnvConfig::validate() const {
  for (const Link* l : {&link12, &link13}) {
    if (!(l->capacity > 0.0) || !(l->free_flow_time > 0.0) ||
        l->vdf_alpha < 0.0 || l->vdf_beta < 0.0) {
      throw ConfigError(fmt::format(
          "environment link {} -> {} needs capacity > 0, fft > 0, alpha, "
          "beta >= 0",
          l->from_node, l->to_node));
    }
  }
  if (link12.from_node != 1 || link12.to_node != 2 || link13.from_node != 1 ||
      link13.to_node != 3) {
    throw ConfigError("environment links must be 1 -> 2 and 1 -> 3");
  }
  if (periods < 2) throw ConfigError("environment needs at least 2 periods");
  if (max_demand < 0) throw ConfigError("environment max_demand must be >= 0");
  if (!(demand_normalizer > 0.0) || !(carried_normalizer > 0.0) ||
      !(residual_normalizer > 0.0)) {
    throw ConfigError("environment normalizers must be > 0");
  }
}

ScheduleAction ScheduleAction::from_index(int index) {
  if (index < 0 || index >= kActionCount) {
    throw ConfigError(fmt::format("action index {} outside 0..{}", index,
                                  kActionCount - 1));
  }
  return {index / 3, index % 3};
}

double residual_rate(const std::vector<int>& profile, int t) {
  const int periods = static_cast<int>(profile.size());
  double remaining = 0.0;
  for (int tau = t + 1; tau <= periods; ++tau) remaining += profile[tau - 1];
  return remaining / std::max(1, periods - (t + 1));
}

double period_travel_time(const EnvConfig& cfg, double arc12_flow,
                          double arc13_flow) {
  if (!cfg.use_equilibrium_solver) {
    return arc12_flow * link_travel_time(cfg.link12, arc12_flow) +
           arc13_flow * link_travel_time(cfg.link13, arc13_flow);
  }
  if (arc12_flow <= 0.0 && arc13_flow <= 0.0) return 0.0;
  const Network net(3, 3, {cfg.link12, cfg.link13});
  OdMatrix od(3);
  od.set(1, 2, arc12_flow);
  od.set(1, 3, arc13_flow);
  AssignmentConfig acfg;
  acfg.max_iterations = 10;
  const FlowSolution sol = solve_user_equilibrium(net, od, acfg);
  return sol.total_system_travel_time;
}

std::vector<int> random_profile(const EnvConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> demand(0, cfg.max_demand);
  std::vector<int> profile(static_cast<std::size_t>(cfg.periods));
  for (int& d : profile) d = demand(rng);
  return profile;
}

SchedulingEnv::SchedulingEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

ScheduleState SchedulingEnv::reset(std::vector<int> profile) {
  if (static_cast<int>(profile.size()) != cfg_.periods) {
    throw ConfigError(fmt::format("demand profile has {} periods, expected {}",
                                  profile.size(), cfg_.periods));
  }
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (profile[i] < 0) {
      throw ValidationError(
          fmt::format("period {} demand is {}; must be >= 0", i + 1, profile[i]));
    }
  }
  profile_ = std::move(profile);
  return {1, profile_[0], 0, residual_rate(profile_, 1)};
}

StepOutcome SchedulingEnv::step(const ScheduleState& s, ScheduleAction a) const {
  StepOutcome out;
  const int available = s.current_demand + s.carried_demand;
  const bool last = s.t >= cfg_.periods;
  out.delayed = last ? 0 : std::clamp(a.delay, 0, available);
  out.arc13_flow = std::clamp(a.reroute, 0, available - out.delayed);
  out.arc12_flow = available - out.delayed - out.arc13_flow;
  out.reward = -period_travel_time(cfg_, out.arc12_flow, out.arc13_flow);
  out.terminal = last;
  if (last) {
    out.next = {cfg_.periods, 0, 0, 0.0};
  } else {
    const int t = s.t + 1;
    out.next = {t, profile_[static_cast<std::size_t>(t - 1)], out.delayed,
                residual_rate(profile_, t)};
  }
  return out;
}

Eigen::VectorXd SchedulingEnv::features(const ScheduleState& s) const {
  Eigen::VectorXd f(3);
  f << s.current_demand / cfg_.demand_normalizer,
      s.carried_demand / cfg_.carried_normalizer,
      s.residual_rate / cfg_.residual_normalizer;
  return f;
}

void to_json(nlohmann::json& j, const EnvConfig& cfg) {
  j = nlohmann::json{{"link12", cfg.link12},
                     {"link13", cfg.link13},
                     {"periods", cfg.periods},
                     {"max_demand", cfg.max_demand},
                     {"demand_normalizer", cfg.demand_normalizer},
                     {"carried_normalizer", cfg.carried_normalizer},
                     {"residual_normalizer", cfg.residual_normalizer},
                     {"use_equilibrium_solver", cfg.use_equilibrium_solver}};
}

void from_json(const nlohmann::json& j, EnvConfig& cfg) {
  EnvConfig out;
  if (j.contains("link12")) out.link12 = j.at("link12").get<Link>();
  if (j.contains("link13")) out.link13 = j.at("link13").get<Link>();
  out.periods = j.value("periods", out.periods);
  out.max_demand = j.value("max_demand", out.max_demand);
  out.demand_normalizer = j.value("demand_normalizer", out.demand_normalizer);
  out.carried_normalizer = j.value("carried_normalizer", out.carried_normalizer);
  out.residual_normalizer =
      j.value("residual_normalizer", out.residual_normalizer);
  out.use_equilibrium_solver =
      j.value("use_equilibrium_solver", out.use_equilibrium_solver);
  cfg = out;
}

}  // namespace transopt
