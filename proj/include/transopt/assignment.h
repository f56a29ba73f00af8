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

// Static user-equilibrium traffic assignment by the Frank-Wolfe method with
// BPR volume-delay functions. This is the "simulator" used by calibration.

#ifndef TRANSOPT_ASSIGNMENT_H_
#define TRANSOPT_ASSIGNMENT_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "transopt/network.h"

namespace transopt {

// Direction rule. kClassic moves toward the all-or-nothing load; kConjugate
// moves toward a convex combination of it and the previous target, chosen
// to be conjugate to the previous direction under the diagonal Hessian of
// the Beckmann objective.
enum class FrankWolfeVariant { kClassic, kConjugate };

struct AssignmentConfig {
  FrankWolfeVariant variant = FrankWolfeVariant::kConjugate;
  int max_iterations = 500;
  double gap_tolerance = 1e-4;
  double line_search_tolerance = 1e-8;
  int line_search_max_iterations = 50;

  // Throws ConfigError unless every field is strictly positive.
  void validate() const;
};

struct FlowSolution {
  std::vector<double> link_flows;  // vehicles/hour, by link index
  std::vector<double> link_times;  // minutes, by link index
  double total_system_travel_time = 0.0;  // vehicle-minutes
  double relative_gap = 0.0;
  int iterations = 0;  // Frank-Wolfe steps taken
  bool converged = false;
};

// One Frank-Wolfe iteration as seen by an observer. `times` are the link
// times at `flows`; `auxiliary` is the all-or-nothing load at those times.
// The next iterate is flows + step * (target - flows), where
// target = conjugate_weight * previous target + (1 - conjugate_weight) *
// auxiliary. On the final iteration step is 0 and target equals auxiliary.
struct IterationRecord {
  int iteration = 0;
  std::span<const double> flows;
  std::span<const double> times;
  std::span<const double> auxiliary;
  std::span<const double> target;
  double conjugate_weight = 0.0;
  double beckmann = 0.0;
  double relative_gap = 0.0;
  double step = 0.0;
};

using IterationObserver = std::function<void(const IterationRecord&)>;

// BPR: fft * (1 + alpha * (flow / capacity)^beta). Throws std::domain_error
// on negative flow.
double link_travel_time(const Link& link, double flow);

// Integral of link_travel_time from 0 to `flow`.
double link_cost_integral(const Link& link, double flow);

std::vector<double> link_travel_times(const Network& net,
                                      std::span<const double> flows);

struct ShortestPathTree {
  int origin = 0;
  std::vector<double> distance;  // by node index; +inf when unreachable
  std::vector<long> predecessor_link;  // by node index; -1 at root/unreached
  std::vector<int> predecessor_node;   // by node index; 0 at root/unreached

  bool reaches(int node) const;
  double distance_to(int node) const;
  // Link indices from origin to `node`, in travel order. Throws DataError
  // naming the pair when `node` is unreachable.
  std::vector<std::size_t> path_to(int node) const;
};

// Binary-heap Dijkstra. Requires every time > 0.
ShortestPathTree shortest_path_tree(const Network& net,
                                    std::span<const double> times, int origin);

// Loads every O-D demand onto its current shortest path.
std::vector<double> all_or_nothing(const Network& net,
                                   std::span<const double> times,
                                   const OdMatrix& od);

// Sum over links of link_cost_integral.
double beckmann_objective(const Network& net, std::span<const double> flows);

// (sum x*t - sum y*t) / sum x*t, zero when there is no flow.
double relative_gap(std::span<const double> flows,
                    std::span<const double> auxiliary,
                    std::span<const double> times);

FlowSolution solve_user_equilibrium(const Network& net, const OdMatrix& od,
                                    const AssignmentConfig& cfg = {},
                                    const IterationObserver& observer = {});

// Multiplies each time by (1 + eps), eps ~ N(0, sigma^2), and clamps it at
// the link's free-flow time. Deterministic for a fixed seed.
std::vector<double> perturb_times(const Network& net,
                                  std::span<const double> times,
                                  double noise_sigma, std::uint64_t seed);

// Equilibrium link times with multiplicative noise.
std::vector<double> noisy_arc_times(const Network& net, const OdMatrix& od,
                                    const AssignmentConfig& cfg,
                                    double noise_sigma, std::uint64_t seed);

}  // namespace transopt

#endif  // TRANSOPT_ASSIGNMENT_H_
