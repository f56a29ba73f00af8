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

// JSON run configuration shared by the command-line tool. Every section is
// optional; missing keys keep their defaults, unknown keys are rejected.

#ifndef TRANSOPT_CONFIG_H_
#define TRANSOPT_CONFIG_H_

#include <string>

#include "json.hpp"
#include "transopt/assignment.h"
#include "transopt/calibration.h"
#include "transopt/dqn.h"
#include "transopt/scheduling_env.h"

namespace transopt {

struct RunConfig {
  std::string net_path;
  std::string trips_path;
  AssignmentConfig assignment;
  CalibrationConfig calibration;
  EnvConfig env;
  DQNConfig dqn;
};

// Throws ConfigError for unreadable files, malformed JSON, unknown keys
// and wrongly typed values. Relative paths inside the file are resolved
// against the file's directory.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const nlohmann::json& j,
                           const std::string& base_dir = "");

// Full configuration with every default spelled out.
nlohmann::json to_json(const RunConfig& cfg);

void to_json(nlohmann::json& j, const AssignmentConfig& cfg);
void to_json(nlohmann::json& j, const CombinedArchitecture& arch);
void to_json(nlohmann::json& j, const TrainConfig& cfg);
void to_json(nlohmann::json& j, const GpGrid& grid);
void to_json(nlohmann::json& j, const ProposalConfig& cfg);
void to_json(nlohmann::json& j, const CalibrationConfig& cfg);

}  // namespace transopt

#endif  // TRANSOPT_CONFIG_H_
