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

#include "transopt/calibration.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "transopt/error.h"

namespace transopt {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const std::string kDataDir = TRANSOPT_DATA_DIR;

const Network& sioux_falls() {
  static const Network net =
      load_tntp_network(kDataDir + "/sioux_falls/SiouxFalls_net.tntp");
  return net;
}

const OdMatrix& sioux_falls_trips() {
  static const OdMatrix od =
      load_tntp_trips(kDataDir + "/sioux_falls/SiouxFalls_trips.tntp");
  return od;
}

std::vector<OdPair> first_pairs(int p) {
  auto pairs = sioux_falls_trips().pairs();
  pairs.resize(p);
  return pairs;
}

VectorXd true_theta(const std::vector<OdPair>& pairs) {
  VectorXd t(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    t[i] = sioux_falls_trips().get(pairs[i].first, pairs[i].second);
  }
  return t;
}

// Small budgets keep the end-to-end runs fast.
CalibrationConfig small_config() {
  CalibrationConfig cfg;
  cfg.unknown_pair_count = 5;
  cfg.initial_design_size = 6;
  cfg.batch_size = 2;
  cfg.evaluation_budget = 10;
  cfg.retrain_interval = 1;
  cfg.architecture.encoder_hidden = {8};
  cfg.architecture.latent_dim = 2;
  cfg.architecture.decoder_hidden = {8};
  cfg.architecture.regression_hidden = {8};
  cfg.training.epochs = 30;
  cfg.proposal.starts = 8;
  cfg.proposal.evaluations_per_start = 40;
  cfg.threads = 2;
  return cfg;
}

TEST_CASE("mode names") {
  CHECK(to_string(CalibrationMode::kLatent) == "latent");
  CHECK(to_string(CalibrationMode::kFullSpace) == "full");
  CHECK(calibration_mode_from_string("full-space") == CalibrationMode::kFullSpace);
  CHECK(calibration_mode_from_string("latent") == CalibrationMode::kLatent);
  CHECK_THROWS_AS(calibration_mode_from_string("both"), ConfigError);
}

TEST_CASE("latin hypercube stratification") {
  const MatrixXd two = latin_hypercube_design(VectorXd::Zero(1),
                                              VectorXd::Constant(1, 10.0), 2, 1);
  REQUIRE(two.rows() == 2);
  const double lo = std::min(two(0, 0), two(1, 0));
  const double hi = std::max(two(0, 0), two(1, 0));
  CHECK(lo >= 0.0);
  CHECK(lo < 5.0);
  CHECK(hi >= 5.0);
  CHECK(hi <= 10.0);

  for (auto [n, d] : {std::pair{7, 3}, std::pair{40, 20}, std::pair{13, 1}}) {
    const VectorXd lower = VectorXd::LinSpaced(d, -3.0, 0.0);
    const VectorXd upper = lower.array() + 7000.0;
    const MatrixXd x = latin_hypercube_design(lower, upper, n, 99);
    for (int j = 0; j < d; ++j) {
      std::vector<int> hits(n, 0);
      for (int i = 0; i < n; ++i) {
        const double u = (x(i, j) - lower[j]) / (upper[j] - lower[j]);
        CHECK(u >= 0.0);
        CHECK(u <= 1.0);
        ++hits[std::min(n - 1, static_cast<int>(u * n))];
      }
      CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
  }

  const VectorXd lower = VectorXd::Zero(20), upper = VectorXd::Constant(20, 7000.0);
  CHECK(latin_hypercube_design(lower, upper, 40, 1) ==
        latin_hypercube_design(lower, upper, 40, 1));
  CHECK(latin_hypercube_design(lower, upper, 40, 1) !=
        latin_hypercube_design(lower, upper, 40, 2));
}

TEST_CASE("mean relative discrepancy") {
  const std::vector<double> truth{1.0, 2.0, 4.0};
  CHECK(mean_relative_discrepancy(truth, truth) == 0.0);
  CHECK(mean_relative_discrepancy(std::vector<double>{2.0, 2.0, 3.0}, truth) ==
        doctest::Approx((1.0 + 0.0 + 0.25) / 3.0));
}

TEST_CASE("objective at the truth") {
  const auto pairs = first_pairs(20);
  const VectorXd theta = true_theta(pairs);
  CHECK(theta.head(3) == (VectorXd(3) << 100, 100, 500).finished());
  const DemandSimulator exact(sioux_falls(), sioux_falls_trips(), pairs, {}, 0.0);
  const std::vector<double> truth = exact.noiseless_times(theta);
  CHECK(calibration_objective(theta, truth, exact, 5) == 0.0);
  CHECK(exact.demand_for(theta) == sioux_falls_trips());

  // Per link |max(eps, -c)| with c = 1 - fft / t, eps ~ N(0, s^2):
  // E = s sqrt(2/pi) - s phi(c/s) + c Phi(-c/s).
  constexpr double kSigma = 0.05;
  double oracle = 0.0;
  for (std::size_t a = 0; a < truth.size(); ++a) {
    const double c = 1.0 - sioux_falls().link(a).free_flow_time / truth[a];
    const double r = c / kSigma;
    const double pdf = std::exp(-0.5 * r * r) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf_neg = 0.5 * std::erfc(r / std::numbers::sqrt2);
    oracle += kSigma * std::sqrt(2.0 / std::numbers::pi) - kSigma * pdf + c * cdf_neg;
  }
  oracle /= static_cast<double>(truth.size());
  CHECK(oracle == doctest::Approx(kSigma * std::sqrt(2.0 / std::numbers::pi))
                      .epsilon(0.05));

  const DemandSimulator noisy(sioux_falls(), sioux_falls_trips(), pairs, {},
                              kSigma);
  constexpr int kSeeds = 200;
  double sum = 0.0, sum_sq = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const double v = calibration_objective(theta, truth, noisy, 1000 + seed);
    CHECK(v > 0.0);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / kSeeds;
  const double se = std::sqrt((sum_sq / kSeeds - mean * mean) / (kSeeds - 1));
  CHECK(std::abs(mean - oracle) <= 3.0 * se);

  CHECK(calibration_objective(VectorXd::Zero(20), truth, exact, 0) > 0.0);
}

TEST_CASE("simulator noise and replications") {
  const auto pairs = first_pairs(3);
  const VectorXd theta = VectorXd::Constant(3, 900.0);
  const DemandSimulator once(sioux_falls(), sioux_falls_trips(), pairs, {}, 0.05);
  const auto clean = once.noiseless_times(theta);
  CHECK(once.arc_times(theta, 4) ==
        perturb_times(sioux_falls(), clean, 0.05, 4));
  CHECK(once.arc_times(theta, 4) != once.arc_times(theta, 5));

  const DemandSimulator avg(sioux_falls(), sioux_falls_trips(), pairs, {}, 0.05, 3);
  const auto mean3 = avg.arc_times(theta, 4);
  const auto first = once.arc_times(theta, 4);
  CHECK(mean3 != first);
  CHECK(mean3 == avg.arc_times(theta, 4));

  // Negative coordinates are treated as zero demand.
  const VectorXd neg = (VectorXd(3) << -5.0, 10.0, 20.0).finished();
  CHECK(once.demand_for(neg).get(pairs[0].first, pairs[0].second) == 0.0);
}

TEST_CASE("configuration errors") {
  CalibrationConfig cfg = small_config();
  cfg.evaluation_budget = cfg.initial_design_size - 1;
  CHECK_THROWS_AS(run_calibration(cfg, sioux_falls(), sioux_falls_trips(),
                                  CalibrationMode::kLatent),
                  ConfigError);
  cfg = small_config();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.initial_design_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.unknown_pair_count = 529;
  CHECK_THROWS_AS(run_calibration(cfg, sioux_falls(), sioux_falls_trips(),
                                  CalibrationMode::kFullSpace),
                  ConfigError);
  cfg = small_config();
  cfg.architecture.latent_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("budget equal to the design is a space-filling run") {
  CalibrationConfig cfg = small_config();
  cfg.evaluation_budget = cfg.initial_design_size;
  const CalibrationState s = run_calibration(cfg, sioux_falls(),
                                             sioux_falls_trips(),
                                             CalibrationMode::kLatent);
  REQUIRE(s.trace.size() == 1);
  CHECK(s.trace[0].iteration == 0);
  CHECK(s.trace[0].evaluations == cfg.initial_design_size);
  CHECK(s.evaluated.size() == std::size_t(cfg.initial_design_size));
  CHECK(s.metamodel_fits == 0);
  double best = s.evaluated[0].objective;
  for (const auto& e : s.evaluated) best = std::min(best, e.objective);
  CHECK(s.best_objective == best);

  const MatrixXd design = latin_hypercube_design(
      VectorXd::Zero(5), VectorXd::Constant(5, 7000.0), cfg.initial_design_size,
      cfg.seed);
  for (int i = 0; i < cfg.initial_design_size; ++i) {
    CHECK(s.evaluated[i].theta == design.row(i).transpose());
  }
}

void check_run(const CalibrationState& s, const CalibrationConfig& cfg) {
  CHECK(s.evaluated.size() == std::size_t(cfg.evaluation_budget));
  CHECK(s.true_theta == true_theta(first_pairs(cfg.unknown_pair_count)));
  for (std::size_t k = 1; k < s.trace.size(); ++k) {
    CHECK(s.trace[k].best_objective <= s.trace[k - 1].best_objective);
    CHECK(s.trace[k].evaluations > s.trace[k - 1].evaluations);
  }
  CHECK(s.trace.back().evaluations == cfg.evaluation_budget);
  CHECK(s.trace.back().best_objective == s.best_objective);
  double best = s.evaluated[0].objective;
  for (const auto& e : s.evaluated) {
    CHECK((e.theta.array() >= cfg.lower_bound).all());
    CHECK((e.theta.array() <= cfg.upper_bound).all());
    best = std::min(best, e.objective);
  }
  CHECK(s.best_objective == best);
  CHECK(s.best_theta == s.evaluated[s.best_index].theta);
}

TEST_CASE("calibration loop in both modes") {
  const CalibrationConfig cfg = small_config();
  for (auto mode : {CalibrationMode::kFullSpace, CalibrationMode::kLatent}) {
    CAPTURE(to_string(mode));
    const CalibrationState s =
        run_calibration(cfg, sioux_falls(), sioux_falls_trips(), mode);
    check_run(s, cfg);
    CHECK(s.trace.size() == 3);
    if (mode == CalibrationMode::kLatent) {
      CHECK(s.metamodel_fits == 2);
      for (std::size_t i = cfg.initial_design_size; i < s.evaluated.size(); ++i) {
        CHECK(s.evaluated[i].coords.size() == 2);
        CHECK(s.evaluated[i].coords.cwiseAbs().maxCoeff() <= 1.0);
      }
    } else {
      CHECK(s.metamodel_fits == 0);
    }
  }
}

TEST_CASE("partial final batch stops at the budget") {
  CalibrationConfig cfg = small_config();
  cfg.evaluation_budget = 9;
  const CalibrationState s = run_calibration(
      cfg, sioux_falls(), sioux_falls_trips(), CalibrationMode::kFullSpace);
  check_run(s, cfg);
}

TEST_CASE("thread count does not change the result") {
  CalibrationConfig one = small_config();
  one.threads = 1;
  CalibrationConfig four = small_config();
  four.threads = 4;
  const CalibrationState a = run_calibration(one, sioux_falls(),
                                             sioux_falls_trips(),
                                             CalibrationMode::kLatent);
  const CalibrationState b = run_calibration(four, sioux_falls(),
                                             sioux_falls_trips(),
                                             CalibrationMode::kLatent);
  REQUIRE(a.evaluated.size() == b.evaluated.size());
  for (std::size_t i = 0; i < a.evaluated.size(); ++i) {
    CHECK(a.evaluated[i].theta == b.evaluated[i].theta);
    CHECK(a.evaluated[i].arc_times == b.evaluated[i].arc_times);
    CHECK(a.evaluated[i].objective == b.evaluated[i].objective);
  }
  CHECK(a.best_index == b.best_index);
  CHECK(a.metamodel == b.metamodel);
}

TEST_CASE("parallel_for") {
  std::vector<int> out(100, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = int(i) * 2; });
  for (int i = 0; i < 100; ++i) CHECK(out[i] == 2 * i);

  std::atomic<int> calls{0};
  CHECK_THROWS_AS(parallel_for(50, 3,
                               [&](std::size_t i) {
                                 ++calls;
                                 if (i == 7) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
  parallel_for(0, 4, [&](std::size_t) { FAIL("no work expected"); });
}

}  // namespace
}  // namespace transopt
