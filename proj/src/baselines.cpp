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

#include "fedecado/baselines.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fedecado/parallel.hpp"

namespace fedecado {

std::string_view to_string(BaselineAlgo algo) {
  switch (algo) {
    case BaselineAlgo::kFedAvg:
      return "fedavg";
    case BaselineAlgo::kFedProx:
      return "fedprox";
    case BaselineAlgo::kFedNova:
      return "fednova";
  }
  return "unknown";
}

BaselineAlgo baseline_algo_from_string(std::string_view name) {
  if (name == "fedavg") return BaselineAlgo::kFedAvg;
  if (name == "fedprox") return BaselineAlgo::kFedProx;
  if (name == "fednova") return BaselineAlgo::kFedNova;
  throw ConfigError("unknown baseline algorithm '" + std::string(name) + "'");
}

void validate(const BaselineConfig &cfg) {
  if (!(cfg.mu >= 0.0)) throw ConfigError("baseline: mu must be >= 0");
  if (!(cfg.server_lr > 0.0)) {
    throw ConfigError("baseline: server_lr must be > 0");
  }
}

ParamVector local_descent(const LocalObjective &obj, const ClientConfig &cfg,
                          const ParamVector &anchor, double mu,
                          const LocalSolverOptions &opts) {
  validate(cfg);
  require_dim(anchor, obj.dim(), "local_descent anchor");
  std::mt19937_64 rng(opts.seed);
  ParamVector x = anchor;
  for (int step = 1; step <= cfg.epochs; ++step) {
    ParamVector g = opts.minibatch > 0
                        ? obj.minibatch_gradient(x, opts.minibatch, rng)
                        : obj.gradient(x);
    g *= cfg.weight;
    if (mu != 0.0) g += mu * (x - anchor);
    x -= cfg.lr * g;
    if (!x.allFinite()) {
      throw DivergenceError("client " + std::to_string(cfg.id) +
                                ": non-finite state at local step " +
                                std::to_string(step),
                            static_cast<std::size_t>(step));
    }
  }
  return x;
}

namespace {

std::vector<double> normalized_weights(std::span<const LocalTask> active) {
  if (active.empty()) throw Error("baseline round: empty active set");
  double total = 0.0;
  for (const auto &t : active) total += t.cfg.weight;
  std::vector<double> w(active.size());
  for (std::size_t a = 0; a < active.size(); ++a) {
    w[a] = total > 0.0 ? active[a].cfg.weight / total
                       : 1.0 / static_cast<double>(active.size());
  }
  return w;
}

std::vector<ParamVector> solve_all(const ParamVector &x_global,
                                   std::span<const LocalTask> active,
                                   double mu, const LocalSolverOptions &opts,
                                   std::size_t workers) {
  std::vector<ParamVector> out(active.size());
  parallel_for(active.size(), workers, [&](std::size_t a) {
    LocalSolverOptions o = opts;
    o.seed = opts.seed + 0x9e3779b97f4a7c15ULL * (active[a].cfg.id + 1);
    out[a] = local_descent(*active[a].objective, active[a].cfg, x_global, mu, o);
  });
  return out;
}

ParamVector average_locals(const ParamVector &x_global,
                           const std::vector<double> &w,
                           const std::vector<ParamVector> &locals,
                           double server_lr) {
  ParamVector avg = ParamVector::Zero(x_global.size());
  for (std::size_t a = 0; a < locals.size(); ++a) avg += w[a] * locals[a];
  if (server_lr == 1.0) return avg;
  return x_global + server_lr * (avg - x_global);
}

ParamVector normalized_step(const ParamVector &x_global,
                            std::span<const LocalTask> active,
                            const std::vector<double> &w,
                            const std::vector<ParamVector> &locals,
                            double server_lr) {
  double tau_eff = 0.0;
  ParamVector direction = ParamVector::Zero(x_global.size());
  for (std::size_t a = 0; a < locals.size(); ++a) {
    const double span = active[a].cfg.lr * active[a].cfg.epochs;
    tau_eff += w[a] * span;
    direction += w[a] * (x_global - locals[a]) / span;
  }
  return x_global - server_lr * tau_eff * direction;
}

void check_steps(std::span<const LocalTask> active) {
  for (const auto &t : active) {
    if (t.cfg.epochs < 1) {
      throw Error("fednova: client " + std::to_string(t.cfg.id) +
                  " reported zero local steps");
    }
  }
}

}  // namespace

ParamVector fedavg_round(const ParamVector &x_global,
                         std::span<const LocalTask> active, double server_lr,
                         const LocalSolverOptions &opts, std::size_t workers) {
  const auto w = normalized_weights(active);
  return average_locals(x_global, w,
                        solve_all(x_global, active, 0.0, opts, workers),
                        server_lr);
}

ParamVector fedprox_round(const ParamVector &x_global,
                          std::span<const LocalTask> active, double mu,
                          double server_lr, const LocalSolverOptions &opts,
                          std::size_t workers) {
  if (!(mu >= 0.0)) throw ConfigError("fedprox: mu must be >= 0");
  const auto w = normalized_weights(active);
  return average_locals(x_global, w,
                        solve_all(x_global, active, mu, opts, workers),
                        server_lr);
}

ParamVector fednova_round(const ParamVector &x_global,
                          std::span<const LocalTask> active, double server_lr,
                          const LocalSolverOptions &opts, std::size_t workers) {
  check_steps(active);
  const auto w = normalized_weights(active);
  return normalized_step(x_global, active, w,
                         solve_all(x_global, active, 0.0, opts, workers),
                         server_lr);
}

ParamVector baseline_round(const BaselineConfig &cfg,
                           const ParamVector &x_global,
                           std::span<const LocalTask> active,
                           const LocalSolverOptions &opts, std::size_t workers,
                           std::vector<ParamVector> *locals) {
  validate(cfg);
  if (cfg.algo == BaselineAlgo::kFedNova) check_steps(active);
  const auto w = normalized_weights(active);
  const double mu = cfg.algo == BaselineAlgo::kFedProx ? cfg.mu : 0.0;
  auto results = solve_all(x_global, active, mu, opts, workers);
  ParamVector out =
      cfg.algo == BaselineAlgo::kFedNova
          ? normalized_step(x_global, active, w, results, cfg.server_lr)
          : average_locals(x_global, w, results, cfg.server_lr);
  if (locals) *locals = std::move(results);
  return out;
}

}  // namespace fedecado
