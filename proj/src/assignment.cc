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

#include "transopt/assignment.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>

#include "transopt/error.h"

namespace transopt {

void AssignmentConfig::validate() const {
  if (max_iterations <= 0 || !(gap_tolerance > 0.0) ||
      !(line_search_tolerance > 0.0) || line_search_max_iterations <= 0) {
    throw ConfigError(
        "assignment config: max_iterations, gap_tolerance and "
        "line_search_tolerance must be > 0");
  }
}

double link_travel_time(const Link& link, double flow) {
  if (flow < 0.0) {
    throw std::domain_error(
        fmt::format("link {}: negative flow {}", link.id, flow));
  }
  const double ratio = flow / link.capacity;
  return link.free_flow_time *
         (1.0 + link.vdf_alpha * std::pow(ratio, link.vdf_beta));
}

double link_cost_integral(const Link& link, double flow) {
  if (flow < 0.0) {
    throw std::domain_error(
        fmt::format("link {}: negative flow {}", link.id, flow));
  }
  const double ratio = flow / link.capacity;
  return link.free_flow_time *
         (flow + link.vdf_alpha * flow * std::pow(ratio, link.vdf_beta) /
                     (link.vdf_beta + 1.0));
}

std::vector<double> link_travel_times(const Network& net,
                                      std::span<const double> flows) {
  std::vector<double> times(net.link_count());
  for (std::size_t a = 0; a < times.size(); ++a) {
    times[a] = link_travel_time(net.link(a), flows[a]);
  }
  return times;
}

bool ShortestPathTree::reaches(int node) const {
  return node >= 1 && static_cast<std::size_t>(node) <= distance.size() &&
         std::isfinite(distance[node - 1]);
}

double ShortestPathTree::distance_to(int node) const {
  if (!reaches(node)) return std::numeric_limits<double>::infinity();
  return distance[node - 1];
}

std::vector<std::size_t> ShortestPathTree::path_to(int node) const {
  if (!reaches(node)) {
    throw DataError(fmt::format("no path from zone {} to zone {}", origin, node));
  }
  std::vector<std::size_t> path;
  for (int current = node; current != origin;
       current = predecessor_node[current - 1]) {
    path.push_back(static_cast<std::size_t>(predecessor_link[current - 1]));
  }
  std::reverse(path.begin(), path.end());
  return path;
}

ShortestPathTree shortest_path_tree(const Network& net,
                                    std::span<const double> times,
                                    int origin) {
  if (!net.has_node(origin)) {
    throw DataError(fmt::format("origin {} is not a node", origin));
  }
  const auto n = static_cast<std::size_t>(net.node_count());
  ShortestPathTree tree;
  tree.origin = origin;
  tree.distance.assign(n, std::numeric_limits<double>::infinity());
  tree.predecessor_link.assign(n, -1);
  tree.predecessor_node.assign(n, 0);

  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  tree.distance[origin - 1] = 0.0;
  heap.emplace(0.0, origin);
  while (!heap.empty()) {
    const auto [dist, node] = heap.top();
    heap.pop();
    if (dist > tree.distance[node - 1]) continue;
    if (node != origin && !net.allows_through(node)) continue;
    for (const std::size_t li : net.outgoing(node)) {
      const int next = net.link(li).to_node;
      if (!net.has_node(next)) continue;
      const double candidate = dist + times[li];
      // Strict improvement keeps the first-listed link on ties.
      if (candidate < tree.distance[next - 1]) {
        tree.distance[next - 1] = candidate;
        tree.predecessor_link[next - 1] = static_cast<long>(li);
        tree.predecessor_node[next - 1] = node;
        heap.emplace(candidate, next);
      }
    }
  }
  return tree;
}

std::vector<double> all_or_nothing(const Network& net,
                                   std::span<const double> times,
                                   const OdMatrix& od) {
  std::vector<double> flows(net.link_count(), 0.0);
  const auto& entries = od.entries();
  auto it = entries.begin();
  while (it != entries.end()) {
    const int origin = it->first.first;
    const ShortestPathTree tree = shortest_path_tree(net, times, origin);
    for (; it != entries.end() && it->first.first == origin; ++it) {
      const int dest = it->first.second;
      if (!tree.reaches(dest)) {
        throw DataError(
            fmt::format("no path from zone {} to zone {}", origin, dest));
      }
      const double demand = it->second;
      for (int node = dest; node != origin;
           node = tree.predecessor_node[node - 1]) {
        flows[static_cast<std::size_t>(tree.predecessor_link[node - 1])] +=
            demand;
      }
    }
  }
  return flows;
}

double beckmann_objective(const Network& net, std::span<const double> flows) {
  double total = 0.0;
  for (std::size_t a = 0; a < net.link_count(); ++a) {
    total += link_cost_integral(net.link(a), flows[a]);
  }
  return total;
}

double relative_gap(std::span<const double> flows,
                    std::span<const double> auxiliary,
                    std::span<const double> times) {
  double current = 0.0;
  double best = 0.0;
  for (std::size_t a = 0; a < flows.size(); ++a) {
    current += flows[a] * times[a];
    best += auxiliary[a] * times[a];
  }
  if (current <= 0.0) return 0.0;
  return std::max(0.0, (current - best) / current);
}

namespace {

// Derivative of the Beckmann objective along x + step * (y - x).
double directional_derivative(const Network& net, std::span<const double> x,
                              std::span<const double> y, double step) {
  double g = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    const double d = y[a] - x[a];
    if (d == 0.0) continue;
    const double flow = std::max(0.0, x[a] + step * d);
    g += link_travel_time(net.link(a), flow) * d;
  }
  return g;
}

double line_search(const Network& net, std::span<const double> x,
                   std::span<const double> y, const AssignmentConfig& cfg) {
  if (directional_derivative(net, x, y, 0.0) >= 0.0) return 0.0;
  if (directional_derivative(net, x, y, 1.0) <= 0.0) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < cfg.line_search_max_iterations &&
                  hi - lo > cfg.line_search_tolerance;
       ++i) {
    const double mid = 0.5 * (lo + hi);
    if (directional_derivative(net, x, y, mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

void check_finite(std::span<const double> values, int iteration,
                  const char* what) {
  for (const double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(fmt::format(
          "Frank-Wolfe iteration {}: non-finite {}", iteration, what));
    }
  }
}

}  // namespace

namespace {

// Weight on the previous target that makes the new direction conjugate to
// the previous one, capped below 1 so the AON load always contributes.
double conjugate_weight(const Network& net, std::span<const double> x,
                        std::span<const double> y,
                        std::span<const double> previous_target) {
  constexpr double kMaxWeight = 0.99;
  double numerator = 0.0;
  double denominator = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    const Link& link = net.link(a);
    const double ratio = x[a] / link.capacity;
    const double slope = link.free_flow_time * link.vdf_alpha *
                         link.vdf_beta * std::pow(ratio, link.vdf_beta - 1.0) /
                         link.capacity;
    const double prev = previous_target[a] - x[a];
    const double fw = y[a] - x[a];
    numerator += prev * slope * fw;
    denominator += prev * slope * (fw - prev);
  }
  if (denominator == 0.0 || !std::isfinite(numerator / denominator)) return 0.0;
  return std::clamp(numerator / denominator, 0.0, kMaxWeight);
}

}  // namespace

FlowSolution solve_user_equilibrium(const Network& net, const OdMatrix& od,
                                    const AssignmentConfig& cfg,
                                    const IterationObserver& observer) {
  cfg.validate();
  std::vector<double> x =
      all_or_nothing(net, link_travel_times(net, std::vector<double>(
                                                     net.link_count(), 0.0)),
                     od);
  std::vector<double> target;
  FlowSolution solution;
  for (int iteration = 0;; ++iteration) {
    const std::vector<double> times = link_travel_times(net, x);
    check_finite(times, iteration, "link time");
    const std::vector<double> y = all_or_nothing(net, times, od);
    const double gap = relative_gap(x, y, times);
    if (!std::isfinite(gap)) {
      throw NumericError(
          fmt::format("Frank-Wolfe iteration {}: non-finite gap", iteration));
    }
    const bool converged = gap <= cfg.gap_tolerance;
    const bool stop = converged || iteration >= cfg.max_iterations;

    double weight = 0.0;
    double step = 0.0;
    std::vector<double> next_target = y;
    if (!stop) {
      if (cfg.variant == FrankWolfeVariant::kConjugate && !target.empty()) {
        weight = conjugate_weight(net, x, y, target);
        for (std::size_t a = 0; a < x.size(); ++a) {
          next_target[a] = weight * target[a] + (1.0 - weight) * y[a];
        }
        // Fall back to the plain direction if the blend is not a descent one.
        if (weight > 0.0 &&
            directional_derivative(net, x, next_target, 0.0) >= 0.0) {
          weight = 0.0;
          next_target = y;
        }
      }
      step = line_search(net, x, next_target, cfg);
    }
    if (observer) {
      observer(IterationRecord{iteration, x, times, y, next_target, weight,
                               beckmann_objective(net, x), gap, step});
    }
    if (stop) {
      solution.link_times = times;
      solution.relative_gap = gap;
      solution.iterations = iteration;
      solution.converged = converged;
      break;
    }
    for (std::size_t a = 0; a < x.size(); ++a) {
      x[a] = std::max(0.0, x[a] + step * (next_target[a] - x[a]));
    }
    check_finite(x, iteration, "link flow");
    target = std::move(next_target);
  }
  solution.link_flows = std::move(x);
  double tstt = 0.0;
  for (std::size_t a = 0; a < solution.link_flows.size(); ++a) {
    tstt += solution.link_flows[a] * solution.link_times[a];
  }
  solution.total_system_travel_time = tstt;
  return solution;
}

std::vector<double> perturb_times(const Network& net,
                                  std::span<const double> times,
                                  double noise_sigma, std::uint64_t seed) {
  if (noise_sigma < 0.0) {
    throw ConfigError(fmt::format("noise_sigma {} must be >= 0", noise_sigma));
  }
  std::vector<double> out(times.begin(), times.end());
  if (noise_sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  for (std::size_t a = 0; a < out.size(); ++a) {
    out[a] = std::max(net.link(a).free_flow_time, out[a] * (1.0 + noise(rng)));
  }
  return out;
}

std::vector<double> noisy_arc_times(const Network& net, const OdMatrix& od,
                                    const AssignmentConfig& cfg,
                                    double noise_sigma, std::uint64_t seed) {
  const FlowSolution solution = solve_user_equilibrium(net, od, cfg);
  return perturb_times(net, solution.link_times, noise_sigma, seed);
}

}  // namespace transopt
