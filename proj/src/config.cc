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

#include "transopt/config.h"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "transopt/error.h"

namespace transopt {

namespace {

using nlohmann::json;

// Reads optional keys of one JSON object and rejects the ones nobody asked
// for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(fmt::format("config '{}' must be an object", path_));
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(
          fmt::format("config '{}.{}': {}", path_, key, e.what()));
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError(fmt::format("config '{}': unknown key '{}'",
                                      path_.empty() ? "<root>" : path_, key));
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read(Section s, AssignmentConfig& cfg) {
  if (s.has("variant")) {
    std::string name;
    s.get("variant", name);
    if (name == "conjugate") {
      cfg.variant = FrankWolfeVariant::kConjugate;
    } else if (name == "classic") {
      cfg.variant = FrankWolfeVariant::kClassic;
    } else {
      throw ConfigError(fmt::format(
          "config 'assignment.variant': '{}' is not classic | conjugate",
          name));
    }
  }
  s.get("max_iterations", cfg.max_iterations);
  s.get("gap_tolerance", cfg.gap_tolerance);
  s.get("line_search_tolerance", cfg.line_search_tolerance);
  s.get("line_search_max_iterations", cfg.line_search_max_iterations);
  s.finish();
}

void read(Section s, CombinedArchitecture& arch) {
  s.get("encoder_hidden", arch.encoder_hidden);
  s.get("latent_dim", arch.latent_dim);
  s.get("decoder_hidden", arch.decoder_hidden);
  s.get("regression_hidden", arch.regression_hidden);
  s.finish();
}

void read(Section s, TrainConfig& cfg) {
  s.get("learning_rate", cfg.learning_rate);
  s.get("epochs", cfg.epochs);
  s.get("batch_size", cfg.batch_size);
  s.get("l2_penalty", cfg.l2_penalty);
  s.get("penalty_weight", cfg.penalty_weight);
  s.get("seed", cfg.seed);
  s.finish();
}

void read(Section s, GpGrid& grid) {
  s.get("length_scale_min", grid.length_scale_min);
  s.get("length_scale_max", grid.length_scale_max);
  s.get("length_scale_steps", grid.length_scale_steps);
  s.get("signal_variance_min", grid.signal_variance_min);
  s.get("signal_variance_max", grid.signal_variance_max);
  s.get("signal_variance_steps", grid.signal_variance_steps);
  s.get("noise_variance_min", grid.noise_variance_min);
  s.get("noise_variance_max", grid.noise_variance_max);
  s.get("noise_variance_steps", grid.noise_variance_steps);
  s.finish();
}

void read(Section s, ProposalConfig& cfg) {
  s.get("starts", cfg.starts);
  s.get("evaluations_per_start", cfg.evaluations_per_start);
  s.get("min_separation", cfg.min_separation);
  s.finish();
}

void read(Section s, CalibrationConfig& cfg) {
  s.get("unknown_pair_count", cfg.unknown_pair_count);
  s.get("lower_bound", cfg.lower_bound);
  s.get("upper_bound", cfg.upper_bound);
  s.get("initial_design_size", cfg.initial_design_size);
  s.get("batch_size", cfg.batch_size);
  s.get("evaluation_budget", cfg.evaluation_budget);
  s.get("retrain_interval", cfg.retrain_interval);
  s.get("noise_sigma", cfg.noise_sigma);
  s.get("noise_replications", cfg.noise_replications);
  s.get("demand_scale", cfg.demand_scale);
  s.get("seed", cfg.seed);
  s.get("threads", cfg.threads);
  if (s.has("architecture")) read(s.child("architecture"), cfg.architecture);
  if (s.has("training")) read(s.child("training"), cfg.training);
  if (s.has("grid")) read(s.child("grid"), cfg.grid);
  if (s.has("proposal")) read(s.child("proposal"), cfg.proposal);
  s.finish();
}

// Endpoints of the two scheduling links are fixed; the keys are accepted so
// that echoed configurations load back unchanged.
void read(Section s, Link& link, const std::string& name) {
  Link read_link = link;
  s.get("id", read_link.id);
  s.get("from_node", read_link.from_node);
  s.get("to_node", read_link.to_node);
  s.get("capacity", read_link.capacity);
  s.get("length", read_link.length);
  s.get("free_flow_time", read_link.free_flow_time);
  s.get("vdf_alpha", read_link.vdf_alpha);
  s.get("vdf_beta", read_link.vdf_beta);
  s.get("speed", read_link.speed);
  s.get("toll", read_link.toll);
  s.get("type", read_link.type);
  s.finish();
  if (read_link.id != link.id || read_link.from_node != link.from_node ||
      read_link.to_node != link.to_node) {
    throw ConfigError(fmt::format(
        "config 'env.{}': id and endpoints are fixed at {} ({} -> {})", name,
        link.id, link.from_node, link.to_node));
  }
  link = read_link;
}

void read(Section s, EnvConfig& cfg) {
  if (s.has("link12")) read(s.child("link12"), cfg.link12, "link12");
  if (s.has("link13")) read(s.child("link13"), cfg.link13, "link13");
  s.get("periods", cfg.periods);
  s.get("max_demand", cfg.max_demand);
  s.get("demand_normalizer", cfg.demand_normalizer);
  s.get("carried_normalizer", cfg.carried_normalizer);
  s.get("residual_normalizer", cfg.residual_normalizer);
  s.get("use_equilibrium_solver", cfg.use_equilibrium_solver);
  s.finish();
}

void read(Section s, DQNConfig& cfg) {
  s.get("gamma", cfg.gamma);
  s.get("epsilon_start", cfg.epsilon_start);
  s.get("epsilon_end", cfg.epsilon_end);
  s.get("epsilon_decay_steps", cfg.epsilon_decay_steps);
  s.get("target_update_interval", cfg.target_update_interval);
  s.get("batch_size", cfg.batch_size);
  s.get("buffer_capacity", cfg.buffer_capacity);
  s.get("learning_rate", cfg.learning_rate);
  s.get("updates_per_step", cfg.updates_per_step);
  s.get("episodes", cfg.episodes);
  s.get("hidden", cfg.hidden);
  s.get("seed", cfg.seed);
  s.finish();
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

}  // namespace

RunConfig parse_run_config(const json& j, const std::string& base_dir) {
  RunConfig cfg;
  Section root(j, "");
  root.get("net", cfg.net_path);
  root.get("trips", cfg.trips_path);
  cfg.net_path = resolve(cfg.net_path, base_dir);
  cfg.trips_path = resolve(cfg.trips_path, base_dir);
  if (root.has("assignment")) read(root.child("assignment"), cfg.assignment);
  if (root.has("calibration")) {
    read(root.child("calibration"), cfg.calibration);
  }
  if (root.has("env")) read(root.child("env"), cfg.env);
  if (root.has("dqn")) read(root.child("dqn"), cfg.dqn);
  root.finish();
  // The calibration simulator follows the top-level solver settings.
  cfg.calibration.assignment = cfg.assignment;
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config '{}': {}", path, e.what()));
  }
  return parse_run_config(
      j, std::filesystem::path(path).parent_path().string());
}

void to_json(json& j, const AssignmentConfig& cfg) {
  j = json{{"variant", cfg.variant == FrankWolfeVariant::kConjugate
                           ? "conjugate"
                           : "classic"},
           {"max_iterations", cfg.max_iterations},
           {"gap_tolerance", cfg.gap_tolerance},
           {"line_search_tolerance", cfg.line_search_tolerance},
           {"line_search_max_iterations", cfg.line_search_max_iterations}};
}

void to_json(json& j, const CombinedArchitecture& arch) {
  j = json{{"encoder_hidden", arch.encoder_hidden},
           {"latent_dim", arch.latent_dim},
           {"decoder_hidden", arch.decoder_hidden},
           {"regression_hidden", arch.regression_hidden}};
}

void to_json(json& j, const TrainConfig& cfg) {
  j = json{{"learning_rate", cfg.learning_rate},
           {"epochs", cfg.epochs},
           {"batch_size", cfg.batch_size},
           {"l2_penalty", cfg.l2_penalty},
           {"penalty_weight", cfg.penalty_weight},
           {"seed", cfg.seed}};
}

void to_json(json& j, const GpGrid& grid) {
  j = json{{"length_scale_min", grid.length_scale_min},
           {"length_scale_max", grid.length_scale_max},
           {"length_scale_steps", grid.length_scale_steps},
           {"signal_variance_min", grid.signal_variance_min},
           {"signal_variance_max", grid.signal_variance_max},
           {"signal_variance_steps", grid.signal_variance_steps},
           {"noise_variance_min", grid.noise_variance_min},
           {"noise_variance_max", grid.noise_variance_max},
           {"noise_variance_steps", grid.noise_variance_steps}};
}

void to_json(json& j, const ProposalConfig& cfg) {
  j = json{{"starts", cfg.starts},
           {"evaluations_per_start", cfg.evaluations_per_start},
           {"min_separation", cfg.min_separation}};
}

void to_json(json& j, const CalibrationConfig& cfg) {
  j = json{{"unknown_pair_count", cfg.unknown_pair_count},
           {"lower_bound", cfg.lower_bound},
           {"upper_bound", cfg.upper_bound},
           {"initial_design_size", cfg.initial_design_size},
           {"batch_size", cfg.batch_size},
           {"evaluation_budget", cfg.evaluation_budget},
           {"retrain_interval", cfg.retrain_interval},
           {"noise_sigma", cfg.noise_sigma},
           {"noise_replications", cfg.noise_replications},
           {"demand_scale", cfg.demand_scale},
           {"seed", cfg.seed},
           {"architecture", cfg.architecture},
           {"training", cfg.training},
           {"grid", cfg.grid},
           {"proposal", cfg.proposal}};
}

json to_json(const RunConfig& cfg) {
  return json{{"net", cfg.net_path},
              {"trips", cfg.trips_path},
              {"assignment", cfg.assignment},
              {"calibration", cfg.calibration},
              {"env", cfg.env},
              {"dqn", cfg.dqn}};
}

}  // namespace transopt
