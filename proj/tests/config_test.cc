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

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "transopt/error.h"

namespace transopt {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("transopt_config_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST_CASE("defaults survive an empty document") {
  const RunConfig cfg = parse_run_config(json::object());
  CHECK(cfg.net_path.empty());
  CHECK(cfg.assignment.max_iterations == 500);
  CHECK(cfg.calibration.evaluation_budget == 120);
  CHECK(cfg.dqn.episodes == 100);
  CHECK(cfg.env.periods == 24);
}

TEST_CASE("sections override defaults") {
  const json j = json::parse(R"({
    "assignment": {"variant": "classic", "gap_tolerance": 1e-5},
    "calibration": {"evaluation_budget": 60, "architecture": {"latent_dim": 3},
                    "training": {"epochs": 10}},
    "env": {"link13": {"free_flow_time": 3.0}, "max_demand": 5},
    "dqn": {"hidden": [32], "seed": 9}
  })");
  const RunConfig cfg = parse_run_config(j);
  CHECK(cfg.assignment.variant == FrankWolfeVariant::kClassic);
  CHECK(cfg.assignment.gap_tolerance == 1e-5);
  CHECK(cfg.calibration.assignment.variant == FrankWolfeVariant::kClassic);
  CHECK(cfg.calibration.evaluation_budget == 60);
  CHECK(cfg.calibration.architecture.latent_dim == 3);
  CHECK(cfg.calibration.training.epochs == 10);
  CHECK(cfg.env.link13.free_flow_time == 3.0);
  CHECK(cfg.env.link13.capacity == 4.0);
  CHECK(cfg.env.max_demand == 5);
  CHECK(cfg.dqn.hidden == std::vector<std::size_t>{32});
  CHECK(cfg.dqn.seed == 9);
}

TEST_CASE("malformed configurations are config errors") {
  CHECK_THROWS_AS(parse_run_config(json{{"netz", "x"}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"dqn", {{"gama", 0.9}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"dqn", {{"episodes", "many"}}}}),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"assignment", {{"variant", "fast"}}}}),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"env", 3}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::array()), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json{{"env", {{"link12", {{"to_node", 3}}}}}}),
                  ConfigError);
  try {
    parse_run_config(json{{"calibration", {{"grid", {{"steps", 3}}}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("calibration.grid") != std::string::npos);
    CHECK(std::string(e.what()).find("steps") != std::string::npos);
  }
}

TEST_CASE("files resolve relative paths against their directory") {
  const fs::path dir = scratch_dir("paths");
  fs::create_directories(dir / "cfg");
  {
    std::ofstream out(dir / "cfg" / "run.json");
    out << R"({"net": "../data/net.tntp", "trips": "/abs/trips.tntp"})";
  }
  const RunConfig cfg = load_run_config((dir / "cfg" / "run.json").string());
  CHECK(cfg.net_path == (dir / "data" / "net.tntp").string());
  CHECK(cfg.trips_path == "/abs/trips.tntp");

  {
    std::ofstream out(dir / "broken.json");
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_run_config((dir / "broken.json").string()), ConfigError);
  CHECK_THROWS_AS(load_run_config((dir / "absent.json").string()), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("serialized configuration parses back to itself") {
  RunConfig cfg;
  cfg.net_path = "/n.tntp";
  cfg.dqn.episodes = 7;
  cfg.calibration.noise_sigma = 0.1;
  cfg.env.use_equilibrium_solver = true;
  const json j = to_json(cfg);
  CHECK(to_json(parse_run_config(j)) == j);
}

}  // namespace
}  // namespace transopt
