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

// transopt: equilibrium assignment, demand calibration and demand
// scheduling from the command line.
//
//   transopt assign    --net N --trips T [--max-iterations K] --out-dir D
//   transopt calibrate --net N --trips T [--mode latent|full|both] ...
//   transopt rl-train  [--episodes E] [--seed S] --out-dir D
//   transopt rl-eval   [--model M | --policy null] [--profile p1,...]
//   transopt check     --net N [--trips T]
//
// Exit codes: 0 success, 1 usage or configuration, 2 input data,
// 3 numeric failure (including an unconverged assignment).

#include <fmt/format.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "transopt/assignment.h"
#include "transopt/calibration.h"
#include "transopt/config.h"
#include "transopt/dqn.h"
#include "transopt/error.h"
#include "transopt/network.h"
#include "transopt/scheduling_env.h"

namespace {

using nlohmann::json;
using namespace transopt;

constexpr const char* kVersion = "0.1.0";

// Demand profile used when rl-eval is given none.
const std::vector<int> kReferenceProfile = {4, 2, 3, 1, 1, 3, 0, 0, 1, 1, 1, 2,
                                            2, 4, 2, 1, 3, 2, 0, 2, 3, 2, 1, 2};

struct Options {
  std::string command;
  std::string net;
  std::string trips;
  std::string config;
  std::string out_dir = ".";
  std::string mode = "both";
  std::string policy = "model";
  std::string model;
  std::string profile;
  std::uint64_t seed = 0;
  int episodes = -1;
  int budget = -1;
  int max_iterations = -1;
  int threads = -1;
  double noise_sigma = -1.0;
  bool seed_set = false;
};

// Files are staged in memory and written only once the command succeeded,
// each through a temporary file and a rename.
class OutputSet {
 public:
  void add(std::string name, std::string content) {
    files_.emplace_back(std::move(name), std::move(content));
  }

  void commit(const std::string& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
      throw ConfigError(
          fmt::format("cannot create output directory '{}': {}", dir,
                      ec.message()));
    }
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged;
    for (const auto& [name, content] : files_) {
      const auto final_path = std::filesystem::path(dir) / name;
      auto tmp = final_path;
      tmp += ".tmp";
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << content;
      out.close();
      if (!out) {
        for (const auto& s : staged) std::filesystem::remove(s.first, ec);
        std::filesystem::remove(tmp, ec);
        throw ConfigError(fmt::format("cannot write '{}'", tmp.string()));
      }
      staged.emplace_back(tmp, final_path);
    }
    for (const auto& [tmp, final_path] : staged) {
      std::filesystem::rename(tmp, final_path);
    }
  }

  const std::vector<std::pair<std::string, std::string>>& files() const {
    return files_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string num(double v) { return fmt::format("{}", v); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json metadata(const Options& opt, const RunConfig& cfg) {
  return json{{"tool", "transopt"},
              {"version", kVersion},
              {"command", opt.command},
              {"config", to_json(cfg)}};
}

RunConfig resolve_config(const Options& opt) {
  RunConfig cfg = opt.config.empty() ? RunConfig{}
                                     : load_run_config(opt.config);
  if (!opt.net.empty()) cfg.net_path = opt.net;
  if (!opt.trips.empty()) cfg.trips_path = opt.trips;
  if (opt.max_iterations >= 0) cfg.assignment.max_iterations = opt.max_iterations;
  if (opt.seed_set) {
    cfg.calibration.seed = opt.seed;
    cfg.dqn.seed = opt.seed;
  }
  if (opt.budget >= 0) cfg.calibration.evaluation_budget = opt.budget;
  if (opt.noise_sigma >= 0.0) cfg.calibration.noise_sigma = opt.noise_sigma;
  if (opt.threads >= 0) cfg.calibration.threads = opt.threads;
  if (opt.episodes >= 0) cfg.dqn.episodes = opt.episodes;
  cfg.calibration.assignment = cfg.assignment;
  return cfg;
}

Network require_network(const RunConfig& cfg) {
  if (cfg.net_path.empty()) throw ConfigError("--net is required");
  Network net = load_tntp_network(cfg.net_path);
  const auto problems = validate_network(net);
  if (!problems.empty()) {
    throw ValidationError(fmt::format("network '{}': {}", cfg.net_path,
                                      fmt::join(problems, "; ")));
  }
  return net;
}

OdMatrix require_trips(const RunConfig& cfg, const Network& net) {
  if (cfg.trips_path.empty()) throw ConfigError("--trips is required");
  OdMatrix od = load_tntp_trips(cfg.trips_path);
  if (od.zone_count() != net.zone_count()) {
    throw ValidationError(fmt::format(
        "trips file has {} zones but the network has {}", od.zone_count(),
        net.zone_count()));
  }
  return od;
}

int cmd_assign(const Options& opt, OutputSet& out) {
  const RunConfig cfg = resolve_config(opt);
  const Network net = require_network(cfg);
  const OdMatrix od = require_trips(cfg, net);
  const FlowSolution sol = solve_user_equilibrium(net, od, cfg.assignment);

  std::string csv = "link_id,from_node,to_node,flow,time\n";
  for (std::size_t a = 0; a < net.link_count(); ++a) {
    const Link& l = net.link(a);
    csv += fmt::format("{},{},{},{},{}\n", l.id, l.from_node, l.to_node,
                       num(sol.link_flows[a]), num(sol.link_times[a]));
  }
  out.add("links.csv", csv);
  json summary{{"metadata", metadata(opt, cfg)},
               {"links", net.link_count()},
               {"od_pairs", od.entries().size()},
               {"total_demand", od.total()},
               {"iterations", sol.iterations},
               {"relative_gap", sol.relative_gap},
               {"converged", sol.converged},
               {"total_system_travel_time", sol.total_system_travel_time},
               {"beckmann_objective", beckmann_objective(net, sol.link_flows)}};
  out.add("assign_summary.json", dump(summary));
  if (!sol.converged) {
    std::cerr << fmt::format(
        "transopt: assignment stopped after {} iterations at relative gap {} "
        "(tolerance {})\n",
        sol.iterations, sol.relative_gap, cfg.assignment.gap_tolerance);
    return 3;
  }
  return 0;
}

void emit_calibration(const Options& opt, const RunConfig& cfg,
                      const Network& net, const OdMatrix& od,
                      const CalibrationState& st, OutputSet& out,
                      json& summary) {
  const std::string mode = to_string(st.mode);
  std::string trace = "iteration,evaluations,best_objective\n";
  for (const auto& row : st.trace) {
    trace += fmt::format("{},{},{}\n", row.iteration, row.evaluations,
                         num(row.best_objective));
  }
  out.add(fmt::format("trace_{}.csv", mode), trace);

  json pairs = json::array();
  for (std::size_t i = 0; i < st.unknown_pairs.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    pairs.push_back({{"origin", st.unknown_pairs[i].first},
                     {"destination", st.unknown_pairs[i].second},
                     {"true", st.true_theta[k]},
                     {"calibrated", st.best_theta[k]}});
  }
  json best{{"metadata", metadata(opt, cfg)},
            {"mode", mode},
            {"best_objective", st.best_objective},
            {"best_evaluation", st.best_index},
            {"evaluations", st.evaluated.size()},
            {"metamodel_fits", st.metamodel_fits},
            {"pairs", pairs}};
  out.add(fmt::format("best_theta_{}.json", mode), dump(best));

  const DemandSimulator sim(net, od.scaled(cfg.calibration.demand_scale),
                            st.unknown_pairs, cfg.calibration.assignment, 0.0);
  const auto calibrated = sim.noiseless_times(st.best_theta);
  std::string cmp =
      "link_id,from_node,to_node,true_time,calibrated_time,abs_diff,rel_diff\n";
  for (std::size_t a = 0; a < net.link_count(); ++a) {
    const Link& l = net.link(a);
    const double diff = calibrated[a] - st.true_times[a];
    cmp += fmt::format("{},{},{},{},{},{},{}\n", l.id, l.from_node, l.to_node,
                       num(st.true_times[a]), num(calibrated[a]),
                       num(std::abs(diff)),
                       num(std::abs(diff) / st.true_times[a]));
  }
  out.add(fmt::format("comparison_{}.csv", mode), cmp);
  summary[mode] = {{"best_objective", st.best_objective},
                   {"evaluations", st.evaluated.size()},
                   {"noiseless_discrepancy",
                    mean_relative_discrepancy(calibrated, st.true_times)}};
}

int cmd_calibrate(const Options& opt, OutputSet& out) {
  const RunConfig cfg = resolve_config(opt);
  std::vector<CalibrationMode> modes;
  if (opt.mode == "both") {
    modes = {CalibrationMode::kFullSpace, CalibrationMode::kLatent};
  } else {
    modes = {calibration_mode_from_string(opt.mode)};
  }
  cfg.calibration.validate();
  const Network net = require_network(cfg);
  const OdMatrix od = require_trips(cfg, net);
  json summary{{"metadata", metadata(opt, cfg)}, {"modes", json::object()}};
  for (const CalibrationMode mode : modes) {
    const CalibrationState st = run_calibration(cfg.calibration, net, od, mode);
    emit_calibration(opt, cfg, net, od, st, out, summary["modes"]);
  }
  out.add("calibration_summary.json", dump(summary));
  return 0;
}

int cmd_rl_train(const Options& opt, OutputSet& out) {
  const RunConfig cfg = resolve_config(opt);
  const DqnTrainResult result = train_dqn(cfg.env, cfg.dqn);
  std::string returns = "episode,return\n";
  for (std::size_t e = 0; e < result.episode_returns.size(); ++e) {
    returns += fmt::format("{},{}\n", e + 1, num(result.episode_returns[e]));
  }
  out.add("returns.csv", returns);
  json model{{"format", "transopt.dqn_model"},
             {"version", 1},
             {"metadata", metadata(opt, cfg)},
             {"steps", result.steps},
             {"env", cfg.env},
             {"dqn", cfg.dqn},
             {"network", result.qnet}};
  out.add("dqn_model.json", dump(model));
  return 0;
}

std::vector<int> parse_profile(const std::string& text) {
  if (text.empty()) return kReferenceProfile;
  std::vector<int> profile;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      profile.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("--profile entry '{}' is not an integer",
                                    item));
    }
  }
  return profile;
}

int cmd_rl_eval(const Options& opt, OutputSet& out) {
  RunConfig cfg = resolve_config(opt);
  Policy policy;
  json model_info;
  if (opt.policy == "null") {
    policy = null_policy();
    model_info = "null";
  } else if (opt.policy == "model") {
    if (opt.model.empty()) throw ConfigError("--model is required");
    std::ifstream in(opt.model);
    if (!in) throw ConfigError(fmt::format("cannot open model '{}'", opt.model));
    Mlp qnet;
    try {
      const json model = json::parse(in);
      if (model.value("format", "") != "transopt.dqn_model") {
        throw DataError(
            fmt::format("'{}' is not a transopt.dqn_model file", opt.model));
      }
      cfg.env = model.at("env").get<EnvConfig>();
      cfg.dqn = model.at("dqn").get<DQNConfig>();
      qnet = model.at("network").get<Mlp>();
    } catch (const json::exception& e) {
      throw DataError(fmt::format("model '{}': {}", opt.model, e.what()));
    }
    if (qnet.input_width() != 3 ||
        qnet.output_width() != static_cast<std::size_t>(kActionCount)) {
      throw DataError(fmt::format("model '{}' has shape {} -> {}, expected 3 -> {}",
                                  opt.model, qnet.input_width(),
                                  qnet.output_width(), kActionCount));
    }
    policy = greedy_policy(qnet);
    model_info = opt.model;
  } else {
    throw ConfigError(
        fmt::format("--policy '{}' is not model | null", opt.policy));
  }
  const std::vector<int> profile = parse_profile(opt.profile);
  const PolicyReport report = evaluate_policy(cfg.env, profile, policy);

  std::string table = "period,original_demand,arc12_demand,arc13_demand\n";
  std::string times =
      "period,original_travel_time,adjusted_travel_time,carried_in,delayed,"
      "action\n";
  for (const auto& row : report.periods) {
    table += fmt::format("{},{},{},{}\n", row.period, row.original_demand,
                         row.arc12_flow, row.arc13_flow);
    times += fmt::format("{},{},{},{},{},{}\n", row.period,
                         num(row.original_travel_time),
                         num(row.adjusted_travel_time), row.carried_in,
                         row.delayed, row.action);
  }
  out.add("schedule.csv", table);
  out.add("period_travel_time.csv", times);
  json summary{{"metadata", metadata(opt, cfg)},
               {"policy", opt.policy},
               {"model", model_info},
               {"profile", profile},
               {"original_total_travel_time", report.original_total},
               {"adjusted_total_travel_time", report.adjusted_total},
               {"improvement", report.improvement},
               {"mean_period_improvement", report.mean_period_improvement}};
  out.add("improvement.json", dump(summary));
  return 0;
}

int cmd_check(const Options& opt) {
  const RunConfig cfg = resolve_config(opt);
  if (cfg.net_path.empty()) throw ConfigError("--net is required");
  const Network net = load_tntp_network(cfg.net_path);
  const auto problems = validate_network(net);
  std::cout << fmt::format("{}: {} nodes, {} zones, {} links\n", cfg.net_path,
                           net.node_count(), net.zone_count(),
                           net.link_count());
  if (!cfg.trips_path.empty()) {
    const OdMatrix od = load_tntp_trips(cfg.trips_path);
    std::cout << fmt::format("{}: {} zones, {} pairs, total demand {}\n",
                             cfg.trips_path, od.zone_count(),
                             od.entries().size(), od.total());
    if (od.zone_count() != net.zone_count()) {
      std::cerr << "transopt: zone counts of network and trips differ\n";
      return 2;
    }
  }
  for (const auto& p : problems) std::cerr << "transopt: " << p << "\n";
  return problems.empty() ? 0 : 2;
}

int run(const Options& opt) {
  OutputSet out;
  int code = 0;
  if (opt.command == "assign") {
    code = cmd_assign(opt, out);
  } else if (opt.command == "calibrate") {
    code = cmd_calibrate(opt, out);
  } else if (opt.command == "rl-train") {
    code = cmd_rl_train(opt, out);
  } else if (opt.command == "rl-eval") {
    code = cmd_rl_eval(opt, out);
  } else {
    return cmd_check(opt);
  }
  out.commit(opt.out_dir);
  for (const auto& [name, content] : out.files()) {
    std::cout << (std::filesystem::path(opt.out_dir) / name).string() << "\n";
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic assignment, demand calibration and scheduling"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options opt;

  const auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON run configuration");
    sub->add_option("--out-dir", opt.out_dir, "Output directory");
  };
  const auto add_seed = [&opt](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&opt](std::uint64_t s) {
          opt.seed = s;
          opt.seed_set = true;
        },
        "Random seed");
  };
  const auto add_inputs = [&opt](CLI::App* sub) {
    sub->add_option("--net", opt.net, "TNTP network file");
    sub->add_option("--trips", opt.trips, "TNTP trips file");
  };

  CLI::App* assign = app.add_subcommand("assign", "Solve user equilibrium");
  add_common(assign);
  add_inputs(assign);
  assign->add_option("--max-iterations", opt.max_iterations,
                     "Frank-Wolfe iteration limit")
      ->check(CLI::NonNegativeNumber);

  CLI::App* calibrate =
      app.add_subcommand("calibrate", "Calibrate unknown O-D demands");
  add_common(calibrate);
  add_inputs(calibrate);
  add_seed(calibrate);
  calibrate->add_option("--mode", opt.mode, "latent | full | both")
      ->check(CLI::IsMember({"latent", "full", "both"}));
  calibrate->add_option("--budget", opt.budget, "Total simulator evaluations")
      ->check(CLI::PositiveNumber);
  calibrate->add_option("--noise-sigma", opt.noise_sigma,
                        "Relative noise on simulated times")
      ->check(CLI::NonNegativeNumber);
  calibrate->add_option("--max-iterations", opt.max_iterations,
                        "Frank-Wolfe iteration limit per evaluation")
      ->check(CLI::PositiveNumber);
  calibrate->add_option("--threads", opt.threads,
                        "Concurrent evaluations (0: all cores)")
      ->check(CLI::NonNegativeNumber);

  CLI::App* rl_train = app.add_subcommand("rl-train", "Train the DQN agent");
  add_common(rl_train);
  add_seed(rl_train);
  rl_train->add_option("--episodes", opt.episodes, "Training episodes")
      ->check(CLI::NonNegativeNumber);

  CLI::App* rl_eval =
      app.add_subcommand("rl-eval", "Roll out a policy on a demand profile");
  add_common(rl_eval);
  rl_eval->add_option("--model", opt.model, "Model JSON from rl-train");
  rl_eval->add_option("--policy", opt.policy, "model | null")
      ->check(CLI::IsMember({"model", "null"}));
  rl_eval->add_option("--profile", opt.profile,
                      "Comma-separated demand per period");

  CLI::App* check = app.add_subcommand("check", "Parse and validate inputs");
  add_common(check);
  add_inputs(check);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  for (const CLI::App* sub : app.get_subcommands()) opt.command = sub->get_name();

  try {
    return run(opt);
  } catch (const ConfigError& e) {
    std::cerr << "transopt: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "transopt: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "transopt: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "transopt: " << e.what() << "\n";
    return 3;
  }
}
