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

#include "fedecado/client.hpp"

#include <random>
#include <string>

namespace fedecado {

void validate(const ClientConfig &cfg) {
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) {
    throw ConfigError("client " + std::to_string(cfg.id) + ": lr must be > 0");
  }
  if (cfg.epochs < 1) {
    throw ConfigError("client " + std::to_string(cfg.id) +
                      ": epochs must be >= 1");
  }
  if (!(cfg.weight >= 0.0)) {
    throw ConfigError("client " + std::to_string(cfg.id) +
                      ": weight must be >= 0");
  }
}

ClientUpdate simulate_local(const LocalObjective &obj, const ClientConfig &cfg,
                            const ParamVector &x_start,
                            const ParamVector &i_flow, double t_start,
                            const LocalSolverOptions &opts) {
  validate(cfg);
  require_dim(x_start, obj.dim(), "simulate_local x_start");
  require_dim(i_flow, obj.dim(), "simulate_local i_flow");

  ClientUpdate out;
  out.id = cfg.id;
  out.window = cfg.window();
  out.checkpoints.reserve(opts.endpoint_only ? 2 : cfg.epochs + 1);
  out.checkpoints.push_back({t_start, x_start});

  std::mt19937_64 rng(opts.seed);
  ParamVector x = x_start;
  for (int step = 1; step <= cfg.epochs; ++step) {
    const ParamVector g = opts.minibatch > 0
                              ? obj.minibatch_gradient(x, opts.minibatch, rng)
                              : obj.gradient(x);
    x -= cfg.lr * (cfg.weight * g + i_flow);
    if (!x.allFinite()) {
      throw DivergenceError("client " + std::to_string(cfg.id) +
                                ": non-finite state at local step " +
                                std::to_string(step) + " (lr too large?)",
                            static_cast<std::size_t>(step));
    }
    if (!opts.endpoint_only || step == cfg.epochs) {
      out.checkpoints.push_back(
          {t_start + cfg.lr * static_cast<double>(step), x});
    }
  }
  return out;
}

std::vector<ClientConfig> sample_heterogeneity(std::size_t n_clients,
                                               std::uint64_t seed,
                                               const HeterogeneityRange &range) {
  if (!(range.lr_min > 0.0) || range.lr_max < range.lr_min ||
      range.epochs_min < 1 || range.epochs_max < range.epochs_min) {
    throw ConfigError("heterogeneity: invalid ranges");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lr(range.lr_min, range.lr_max);
  std::uniform_int_distribution<int> epochs(range.epochs_min, range.epochs_max);
  std::vector<ClientConfig> out(n_clients);
  for (std::size_t i = 0; i < n_clients; ++i) {
    out[i].id = i;
    out[i].lr = lr(rng);
    out[i].epochs = epochs(rng);
    out[i].weight = 1.0 / static_cast<double>(n_clients);
  }
  return out;
}

nlohmann::json update_to_json(const ClientUpdate &update) {
  nlohmann::json cps = nlohmann::json::array();
  for (const auto &cp : update.checkpoints) {
    cps.push_back({cp.t, std::vector<double>(cp.x.data(),
                                             cp.x.data() + cp.x.size())});
  }
  return {{"id", update.id}, {"T", update.window}, {"checkpoints", cps}};
}

ClientUpdate update_from_json(const nlohmann::json &j) {
  ClientUpdate u;
  u.id = j.at("id").get<ClientId>();
  u.window = j.at("T").get<double>();
  for (const auto &cp : j.at("checkpoints")) {
    const auto values = cp.at(1).get<std::vector<double>>();
    u.checkpoints.push_back(
        {cp.at(0).get<double>(),
         Eigen::Map<const ParamVector>(values.data(),
                                       static_cast<Eigen::Index>(values.size()))});
  }
  return u;
}

}  // namespace fedecado
