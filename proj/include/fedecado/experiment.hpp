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

#ifndef FEDECADO_EXPERIMENT_HPP_
#define FEDECADO_EXPERIMENT_HPP_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedecado/baselines.hpp"
#include "fedecado/client.hpp"
#include "fedecado/consensus.hpp"
#include "fedecado/dataset.hpp"
#include "fedecado/objective.hpp"
#include "fedecado/partition.hpp"

namespace fedecado {

enum class Algorithm { kFedEcado, kFedAvg, kFedProx, kFedNova };

std::string_view to_string(Algorithm algo);
Algorithm algorithm_from_string(std::string_view name);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kQuadratic;
  // Quadratic instance: per-client random PSD matrices.
  Eigen::Index dim = 20;
  double eig_min = 10.0;
  double condition = 100.0;
  double center_scale = 1.0;
  // Size of the data-free dataset the quadratic weights are drawn from.
  std::size_t virtual_samples = 1000;
  // Data-backed kinds: a CSV path, or synthetic blobs when empty.
  std::string dataset_path;
  BlobSpec blobs;
  Eigen::Index hidden = 8;
  std::size_t hessian_budget = 256;
  std::optional<std::uint64_t> seed;
};

struct PartitionSpec {
  bool dirichlet = true;
  double alpha = 0.5;
  std::optional<std::uint64_t> seed;
};

struct HeterogeneitySpec {
  bool random = false;
  double lr = 2e-3;
  int epochs = 5;
  HeterogeneityRange range;
  std::optional<std::uint64_t> seed;
};

enum class ClientStart {
  // Every window starts from the broadcast x_c.
  kCentral,
  // Clients continue from their last local state.
  kOwn,
};

struct FedEcadoParams {
  StepController ctrl;
  double dt_ref = 1e-2;
  // Use each client's local window T_i as its reference step.
  bool dt_ref_window = false;
  std::size_t sensitivity_refresh = 0;
  SyncMode sync = SyncMode::kTrajectory;
  InactivePolicy inactive = InactivePolicy::kHoldFlow;
  ClientStart start = ClientStart::kCentral;
};

struct ExperimentConfig {
  ObjectiveSpec objective;
  std::size_t n_clients = 10;
  double participation_ratio = 1.0;
  PartitionSpec partition;
  HeterogeneitySpec heterogeneity;
  Algorithm algo = Algorithm::kFedEcado;
  FedEcadoParams fedecado;
  BaselineConfig baseline;
  LocalSolverOptions local;
  std::size_t rounds_max = 500;
  double tol = 1e-6;
  std::uint64_t seed = 7;
  std::size_t workers = 1;
  std::string output;
  // Per-step trace with the global loss after each accepted step.
  bool trace = true;
  // Real wall-clock times in the metrics; off keeps outputs byte-stable.
  bool timing = false;
  // Keep every accepted FlowState, grouped by round (memory heavy).
  bool keep_trajectories = false;
};

void validate(const ExperimentConfig &cfg);
ExperimentConfig config_from_json(const nlohmann::json &j);
nlohmann::json config_to_json(const ExperimentConfig &cfg);
ExperimentConfig load_config(const std::string &path);

// Number of clients active per round: round(ratio * n).
std::size_t active_count(std::size_t n_clients, double ratio);

// Uniform sample without replacement, sorted, a pure function of
// (seed, round).
std::vector<ClientId> sample_active_set(std::size_t n_clients, double ratio,
                                        std::size_t round, std::uint64_t seed);

// Objectives, weights and client settings built from a config.
struct Problem {
  std::shared_ptr<const Dataset> dataset;
  Partition partition;
  std::vector<ObjectivePtr> objectives;
  std::vector<ClientConfig> clients;
  ParamVector x0;
  std::size_t total_samples = 0;

  std::size_t num_clients() const { return objectives.size(); }
  double global_loss(const ParamVector &x) const;
  ParamVector global_gradient(const ParamVector &x) const;
  // Fraction of all samples classified correctly; NaN for quadratics.
  double accuracy(const ParamVector &x) const;
  // Non-null only for the quadratic kind.
  std::vector<const QuadraticObjective *> quadratics() const;
};

Problem build_problem(const ExperimentConfig &cfg);
Partition build_partition(const ExperimentConfig &cfg);

struct MetricsRow {
  std::size_t round = 0;
  double wall_ms = 0.0;
  double global_loss = 0.0;
  double grad_norm = 0.0;
  double consensus_gap = 0.0;
  double accuracy = 0.0;
  double dt_min = 0.0;
  double dt_mean = 0.0;
  double dt_max = 0.0;
  int backtracks = 0;
};

enum class RunStatus { kConverged, kRoundsExhausted };

struct ExperimentResult {
  std::vector<MetricsRow> metrics;
  std::vector<StepRecord> trace;
  ParamVector final_model;
  std::optional<FlowState> final_state;
  RunStatus status = RunStatus::kRoundsExhausted;
  std::size_t rounds_run = 0;
  // Sum of local epochs over all client windows.
  std::size_t client_epochs = 0;
  // Start state plus accepted states per round when keep_trajectories.
  std::vector<std::vector<FlowState>> trajectories;
};

// Thrown when a state turns non-finite; carries the metrics up to and
// including a diagnostic row for the failing round.
class RunAborted : public Error {
 public:
  RunAborted(const std::string &what, std::vector<MetricsRow> rows)
      : Error(what), rows_(std::move(rows)) {}
  const std::vector<MetricsRow> &rows() const { return rows_; }

 private:
  std::vector<MetricsRow> rows_;
};

ExperimentResult run_experiment(const ExperimentConfig &cfg);
ExperimentResult run_experiment(const ExperimentConfig &cfg,
                                const Problem &problem);

void write_metrics_csv(std::ostream &os, const std::vector<MetricsRow> &rows);
void write_trace_csv(std::ostream &os, const std::vector<StepRecord> &rows);
std::string metrics_csv(const std::vector<MetricsRow> &rows);

// Writes metrics.csv, trace.csv (when enabled), final_model.json and
// summary.json into `dir`, creating it if needed.
void write_outputs(const std::string &dir, const ExperimentConfig &cfg,
                   const ExperimentResult &result);

// Exit code convention of the CLI: 0 converged, 2 rounds exhausted.
int exit_code(RunStatus status);

// ||x - x*|| / ||x*|| against the weighted quadratic minimizer.
double quadratic_relative_error(const Problem &problem, const ParamVector &x);

}  // namespace fedecado

#endif  // FEDECADO_EXPERIMENT_HPP_
