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

#ifndef FEDECADO_CLIENT_HPP_
#define FEDECADO_CLIENT_HPP_

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "fedecado/objective.hpp"
#include "fedecado/types.hpp"

namespace fedecado {

// Local integration settings for one client. One epoch is one Forward-Euler
// step of length `lr` in ODE time.
struct ClientConfig {
  ClientId id = 0;
  double lr = 1e-3;
  int epochs = 1;
  double weight = 1.0;

  double window() const { return lr * static_cast<double>(epochs); }
};

void validate(const ClientConfig &cfg);

struct Checkpoint {
  double t;
  ParamVector x;
};

// Piecewise-linear local trajectory reported to the central agent.
struct ClientUpdate {
  ClientId id = 0;
  std::vector<Checkpoint> checkpoints;
  double window = 0.0;

  const ParamVector &final_state() const { return checkpoints.back().x; }
  double start_time() const { return checkpoints.front().t; }
  double end_time() const { return checkpoints.back().t; }
};

struct LocalSolverOptions {
  // Keep only the first and last checkpoint.
  bool endpoint_only = false;
  // 0 selects full-batch gradients.
  std::size_t minibatch = 0;
  std::uint64_t seed = 0;
};

// e_i Forward-Euler steps of x' = -(p_i grad f_i(x) + i_flow) starting at
// time t_start, with i_flow held constant over the window.
ClientUpdate simulate_local(const LocalObjective &obj, const ClientConfig &cfg,
                            const ParamVector &x_start,
                            const ParamVector &i_flow, double t_start = 0.0,
                            const LocalSolverOptions &opts = {});

struct HeterogeneityRange {
  double lr_min = 1e-4;
  double lr_max = 1e-3;
  int epochs_min = 1;
  int epochs_max = 10;
};

// lr ~ U[lr_min, lr_max], epochs ~ U{epochs_min..epochs_max}. Weights are
// set to 1/n; callers overwrite them with partition weights.
std::vector<ClientConfig> sample_heterogeneity(
    std::size_t n_clients, std::uint64_t seed,
    const HeterogeneityRange &range = {});

nlohmann::json update_to_json(const ClientUpdate &update);
ClientUpdate update_from_json(const nlohmann::json &j);

}  // namespace fedecado

#endif  // FEDECADO_CLIENT_HPP_
