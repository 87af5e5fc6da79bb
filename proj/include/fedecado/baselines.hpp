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

#ifndef FEDECADO_BASELINES_HPP_
#define FEDECADO_BASELINES_HPP_

#include <span>
#include <string_view>
#include <vector>

#include "fedecado/client.hpp"
#include "fedecado/objective.hpp"

namespace fedecado {

enum class BaselineAlgo { kFedAvg, kFedProx, kFedNova };

std::string_view to_string(BaselineAlgo algo);
BaselineAlgo baseline_algo_from_string(std::string_view name);

struct BaselineConfig {
  BaselineAlgo algo = BaselineAlgo::kFedAvg;
  double mu = 0.01;
  double server_lr = 1.0;
};

void validate(const BaselineConfig &cfg);

// One active client of a round. `cfg.weight` is the unnormalized p_i.
struct LocalTask {
  const LocalObjective *objective = nullptr;
  ClientConfig cfg;
};

// Local solve shared by all baselines: e_i steps of
//   x <- x - lr (p_i grad f_i(x) + mu (x - anchor)).
ParamVector local_descent(const LocalObjective &obj, const ClientConfig &cfg,
                          const ParamVector &anchor, double mu,
                          const LocalSolverOptions &opts = {});

// Weighted average of local results, weights renormalized over the active
// set, then x <- x + server_lr (average - x).
ParamVector fedavg_round(const ParamVector &x_global,
                         std::span<const LocalTask> active,
                         double server_lr = 1.0,
                         const LocalSolverOptions &opts = {},
                         std::size_t workers = 1);

// FedAvg with the proximal term mu (x - x_global) in every local step.
ParamVector fedprox_round(const ParamVector &x_global,
                          std::span<const LocalTask> active, double mu,
                          double server_lr = 1.0,
                          const LocalSolverOptions &opts = {},
                          std::size_t workers = 1);

// Normalized averaging: d_i = (x - x_i) / (lr_i e_i) and
// x <- x - server_lr (sum_a p_a e_a lr_a) sum_a p_a d_a.
ParamVector fednova_round(const ParamVector &x_global,
                          std::span<const LocalTask> active,
                          double server_lr = 1.0,
                          const LocalSolverOptions &opts = {},
                          std::size_t workers = 1);

// Dispatch on cfg.algo. `locals`, when given, receives each active client's
// final local state in active-set order.
ParamVector baseline_round(const BaselineConfig &cfg,
                           const ParamVector &x_global,
                           std::span<const LocalTask> active,
                           const LocalSolverOptions &opts = {},
                           std::size_t workers = 1,
                           std::vector<ParamVector> *locals = nullptr);

}  // namespace fedecado

#endif  // FEDECADO_BASELINES_HPP_
