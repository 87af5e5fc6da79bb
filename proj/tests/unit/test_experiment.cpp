/**
 * Copyright 2026 The fedecado-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"

#include "fedecado/experiment.hpp"
#include "fedecado/oracles.hpp"

using namespace fedecado;

namespace {

ExperimentConfig quick_quadratic() {
  ExperimentConfig cfg;
  cfg.objective.dim = 4;
  cfg.objective.eig_min = 10.0;
  cfg.objective.condition = 10.0;
  cfg.objective.virtual_samples = 100;
  cfg.n_clients = 3;
  cfg.heterogeneity.lr = 0.004;
  cfg.heterogeneity.epochs = 5;
  cfg.rounds_max = 50;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_SUITE("experiment-harness") {

TEST_CASE("active set examples") {
  const auto all = sample_active_set(17, 1.0, 4, 9);
  CHECK(all.size() == 17);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  const auto ten = sample_active_set(100, 0.1, 0, 9);
  CHECK(ten.size() == 10);
  CHECK(std::set<ClientId>(ten.begin(), ten.end()).size() == 10);
  for (auto id : ten) CHECK(id < 100);

  CHECK(sample_active_set(100, 0.1, 3, 9) == sample_active_set(100, 0.1, 3, 9));
  int same = 0;
  for (std::size_t r = 0; r < 20; ++r) {
    if (sample_active_set(100, 0.1, r, 9) == sample_active_set(100, 0.1, r + 1, 9)) ++same;
  }
  CHECK(same == 0);
  CHECK(active_count(100, 0.1) == 10);
  CHECK(active_count(3, 0.5) == 2);
}

TEST_CASE("active set sampling is roughly uniform") {
  std::vector<int> hits(20, 0);
  for (std::size_t r = 0; r < 2000; ++r) {
    for (auto id : sample_active_set(20, 0.25, r, 1)) ++hits[id];
  }
  // Expected 500 hits each; allow a wide band.
  for (int h : hits) {
    CHECK(h > 400);
    CHECK(h < 600);
  }
}

TEST_CASE("config validation") {
  ExperimentConfig cfg = quick_quadratic();
  CHECK_NOTHROW(validate(cfg));
  cfg.participation_ratio = 0.1;  // rounds to zero active clients
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = quick_quadratic();
  cfg.participation_ratio = 1.5;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = quick_quadratic();
  cfg.rounds_max = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = quick_quadratic();
  cfg.tol = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("config json round trip and unknown keys") {
  ExperimentConfig cfg = quick_quadratic();
  cfg.algo = Algorithm::kFedNova;
  cfg.fedecado.ctrl.delta = 2e-4;
  cfg.fedecado.sync = SyncMode::kFinalState;
  cfg.baseline.mu = 0.5;
  cfg.heterogeneity.random = true;
  const auto j = config_to_json(cfg);
  const ExperimentConfig back = config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(config_to_json(back) == j);
  CHECK(back.algo == Algorithm::kFedNova);
  CHECK(back.fedecado.ctrl.delta == 2e-4);
  CHECK(back.fedecado.sync == SyncMode::kFinalState);

  auto bad = j;
  bad["colour"] = "blue";
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  auto bad_algo = j;
  bad_algo["algo"] = "fedsgd";
  CHECK_THROWS_AS(config_from_json(bad_algo), ConfigError);
  auto bad_type = j;
  bad_type["n_clients"] = "ten";
  CHECK_THROWS_AS(config_from_json(bad_type), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("dt_ref accepts the window keyword") {
  auto j = config_to_json(quick_quadratic());
  j["fedecado"]["dt_ref"] = "window";
  CHECK(config_from_json(j).fedecado.dt_ref_window);
}

TEST_CASE("single client converges to its center") {
  ExperimentConfig cfg = quick_quadratic();
  cfg.n_clients = 1;
  cfg.objective.eig_min = 10.0;
  cfg.heterogeneity.lr = 0.005;
  cfg.rounds_max = 500;
  cfg.tol = 1e-10;
  const Problem problem = build_problem(cfg);
  const auto result = run_experiment(cfg, problem);
  CHECK(result.status == RunStatus::kConverged);
  const ParamVector &c = problem.quadratics()[0]->center();
  CHECK((result.final_model - c).norm() <= 1e-6 * std::max(1.0, c.norm()));
}

TEST_CASE("identical seeds give identical metrics") {
  for (auto algo : {Algorithm::kFedEcado, Algorithm::kFedAvg, Algorithm::kFedProx,
                    Algorithm::kFedNova}) {
    ExperimentConfig cfg = quick_quadratic();
    cfg.algo = algo;
    cfg.n_clients = 6;
    cfg.participation_ratio = 0.5;
    cfg.heterogeneity.random = true;
    cfg.workers = 3;
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
    cfg.workers = 1;
    CHECK(metrics_csv(run_experiment(cfg).metrics) == metrics_csv(a.metrics));
  }
}

TEST_CASE("global loss decreases on a convex instance") {
  ExperimentConfig cfg = quick_quadratic();
  cfg.n_clients = 8;
  cfg.participation_ratio = 0.5;
  cfg.heterogeneity.random = true;
  cfg.rounds_max = 100;
  const auto result = run_experiment(cfg);
  REQUIRE(result.metrics.size() >= 2);
  CHECK(result.metrics.back().global_loss <= result.metrics.front().global_loss);
  for (std::size_t r = 1; r < result.metrics.size(); ++r) {
    CHECK(result.metrics[r].round > result.metrics[r - 1].round);
    CHECK(std::isfinite(result.metrics[r].global_loss));
  }
}

TEST_CASE("metrics rows carry the step statistics") {
  ExperimentConfig cfg = quick_quadratic();
  cfg.rounds_max = 5;
  const auto result = run_experiment(cfg);
  CHECK(result.status == RunStatus::kRoundsExhausted);
  CHECK(result.rounds_run == 5);
  CHECK(result.metrics.size() == 5);
  for (const auto &row : result.metrics) {
    CHECK(row.dt_min > 0.0);
    CHECK(row.dt_min <= row.dt_mean);
    CHECK(row.dt_mean <= row.dt_max);
    CHECK(row.wall_ms == 0.0);
    CHECK(std::isnan(row.accuracy));
  }
  CHECK_FALSE(result.trace.empty());
  CHECK(result.client_epochs == 5 * 3 * 5);
  CHECK(exit_code(result.status) == 2);
  CHECK(exit_code(RunStatus::kConverged) == 0);
}

TEST_CASE("metrics csv columns follow the row order") {
  MetricsRow row;
  row.round = 1;
  row.global_loss = 0.5;
  row.backtracks = 3;
  const std::string csv = metrics_csv({row});
  std::istringstream in(csv);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(header ==
        "round,wall_ms,global_loss,grad_norm,consensus_gap,accuracy,dt_min,dt_mean,dt_max,backtracks");
  CHECK(line.rfind("1,0,0.5,", 0) == 0);
  CHECK(line.substr(line.size() - 2) == ",3");

  std::ostringstream trace;
  write_trace_csv(trace, {StepRecord{}});
  CHECK(trace.str().rfind("round,tau,dt,eps_c,eps_l,backtracks,norm_xc_change,global_loss\n", 0) == 0);
}

TEST_CASE("classification runs report accuracy") {
  ExperimentConfig cfg = quick_quadratic();
  cfg.objective.kind = ObjectiveKind::kLogistic;
  cfg.objective.blobs.samples = 300;
  cfg.objective.blobs.features = 3;
  cfg.objective.blobs.classes = 3;
  cfg.objective.blobs.seed = 2;
  cfg.rounds_max = 10;
  const auto result = run_experiment(cfg);
  for (const auto &row : result.metrics) {
    CHECK(row.accuracy >= 0.0);
    CHECK(row.accuracy <= 1.0);
  }
  CHECK(result.metrics.back().global_loss < result.metrics.front().global_loss + 1e-12);

  cfg.objective.kind = ObjectiveKind::kMlp;
  cfg.algo = Algorithm::kFedAvg;
  CHECK_NOTHROW(run_experiment(cfg));
}

TEST_CASE("divergent clients abort with a diagnostic row") {
  ExperimentConfig cfg = quick_quadratic();
  cfg.heterogeneity.lr = 1e3;
  cfg.heterogeneity.epochs = 200;
  cfg.algo = Algorithm::kFedAvg;
  try {
    run_experiment(cfg);
    FAIL("expected RunAborted");
  } catch (const RunAborted &e) {
    REQUIRE_FALSE(e.rows().empty());
    CHECK(std::isnan(e.rows().back().global_loss));
  }
}

TEST_CASE("partition and problem construction") {
  ExperimentConfig cfg = quick_quadratic();
  cfg.n_clients = 10;
  const Partition p = build_partition(cfg);
  CHECK(p.num_clients() == 10);
  CHECK(p.num_samples() == cfg.objective.virtual_samples);
  const Problem problem = build_problem(cfg);
  CHECK(problem.num_clients() == 10);
  CHECK(problem.partition.weights == p.weights);
  CHECK(problem.x0 == ParamVector::Zero(4));
  // Global loss is the weighted sum of client losses.
  const ParamVector x = ParamVector::Constant(4, 0.7);
  double expected = 0.0;
  for (std::size_t i = 0; i < 10; ++i) expected += p.weights[i] * problem.objectives[i]->loss(x);
  CHECK(problem.global_loss(x) == doctest::Approx(expected).epsilon(1e-13));
  const auto quads = problem.quadratics();
  const ParamVector star = oracles::quadratic_minimizer(quads, p.weights);
  CHECK(problem.global_gradient(star).norm() <= 1e-10);
  CHECK(quadratic_relative_error(problem, star) <= 1e-14);
}

TEST_CASE("outputs are written to disk") {
  ExperimentConfig cfg = quick_quadratic();
  cfg.rounds_max = 3;
  const auto result = run_experiment(cfg);
  const std::string dir = std::string(FEDECADO_TEST_DATA_DIR) + "/harness_out";
  write_outputs(dir, cfg, result);
  for (const char *f : {"metrics.csv", "trace.csv", "final_model.json", "summary.json"}) {
    std::ifstream in(dir + "/" + f);
    CHECK(in.good());
  }
  std::ifstream s(dir + "/summary.json");
  const auto summary = nlohmann::json::parse(s);
  CHECK(summary.at("rounds") == 3);
  CHECK(summary.contains("client_epochs"));
}

}  // TEST_SUITE
