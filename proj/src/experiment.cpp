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

#include "fedecado/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "fedecado/oracles.hpp"
#include "fedecado/parallel.hpp"

namespace fedecado {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using json = nlohmann::json;

void reject_unknown(const json &j, const std::set<std::string> &known,
                    const std::string &where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto &[key, _] : j.items()) {
    if (!known.count(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_as(const json &j, const char *key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

template <typename T>
void read(const json &j, const char *key, T &out) {
  if (j.contains(key)) out = get_as<T>(j, key);
}

template <typename T>
void read(const json &j, const char *key, std::optional<T> &out) {
  if (j.contains(key)) out = get_as<T>(j, key);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::kFedEcado:
      return "fedecado";
    case Algorithm::kFedAvg:
      return "fedavg";
    case Algorithm::kFedProx:
      return "fedprox";
    case Algorithm::kFedNova:
      return "fednova";
  }
  return "unknown";
}

Algorithm algorithm_from_string(std::string_view name) {
  if (name == "fedecado") return Algorithm::kFedEcado;
  if (name == "fedavg") return Algorithm::kFedAvg;
  if (name == "fedprox") return Algorithm::kFedProx;
  if (name == "fednova") return Algorithm::kFedNova;
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

std::size_t active_count(std::size_t n_clients, double ratio) {
  return static_cast<std::size_t>(
      std::lround(ratio * static_cast<double>(n_clients)));
}

void validate(const ExperimentConfig &cfg) {
  if (cfg.n_clients < 1) throw ConfigError("config: n_clients must be >= 1");
  if (!(cfg.participation_ratio > 0.0 && cfg.participation_ratio <= 1.0)) {
    throw ConfigError("config: participation_ratio must lie in (0, 1]");
  }
  if (active_count(cfg.n_clients, cfg.participation_ratio) < 1) {
    throw ConfigError("config: participation_ratio * n_clients rounds to 0");
  }
  if (cfg.rounds_max < 1) throw ConfigError("config: rounds_max must be >= 1");
  if (!(cfg.tol > 0.0)) throw ConfigError("config: tol must be > 0");
  if (cfg.partition.dirichlet && !(cfg.partition.alpha > 0.0)) {
    throw ConfigError("config: partition alpha must be > 0");
  }
  const auto &h = cfg.heterogeneity;
  if (!h.random && (!(h.lr > 0.0) || h.epochs < 1)) {
    throw ConfigError("config: fixed heterogeneity needs lr > 0, epochs >= 1");
  }
  if (!(cfg.fedecado.dt_ref > 0.0)) {
    throw ConfigError("config: fedecado dt_ref must be > 0");
  }
  validate(cfg.fedecado.ctrl);
  validate(cfg.baseline);
  const auto &o = cfg.objective;
  if (o.kind == ObjectiveKind::kQuadratic) {
    if (o.dim < 1) throw ConfigError("config: objective dim must be >= 1");
    if (!(o.eig_min >= 0.0) || !(o.condition >= 1.0)) {
      throw ConfigError("config: need eig_min >= 0 and condition >= 1");
    }
  }
  if (o.hessian_budget < 1) {
    throw ConfigError("config: hessian_budget must be >= 1");
  }
  if (cfg.workers < 1) throw ConfigError("config: workers must be >= 1");
}

static ExperimentConfig parse_config(const json &j);

ExperimentConfig config_from_json(const json &j) {
  try {
    return parse_config(j);
  } catch (const json::exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

static ExperimentConfig parse_config(const json &j) {
  reject_unknown(j,
                 {"objective", "n_clients", "participation_ratio", "partition",
                  "heterogeneity", "algo", "fedecado", "baseline", "local",
                  "rounds_max", "tol", "seed", "workers", "output", "trace",
                  "timing"},
                 "config");
  ExperimentConfig cfg;
  read(j, "n_clients", cfg.n_clients);
  read(j, "participation_ratio", cfg.participation_ratio);
  read(j, "rounds_max", cfg.rounds_max);
  read(j, "tol", cfg.tol);
  read(j, "seed", cfg.seed);
  read(j, "workers", cfg.workers);
  read(j, "output", cfg.output);
  read(j, "trace", cfg.trace);
  read(j, "timing", cfg.timing);
  if (j.contains("algo")) {
    cfg.algo = algorithm_from_string(j.at("algo").get<std::string>());
  }

  if (j.contains("objective")) {
    const auto &o = j.at("objective");
    reject_unknown(o,
                   {"kind", "dim", "eig_min", "condition", "center_scale",
                    "virtual_samples", "dataset", "synthetic", "hidden",
                    "hessian_budget", "seed"},
                   "objective");
    auto &s = cfg.objective;
    if (o.contains("kind")) {
      s.kind = objective_kind_from_string(o.at("kind").get<std::string>());
    }
    read(o, "dim", s.dim);
    read(o, "eig_min", s.eig_min);
    read(o, "condition", s.condition);
    read(o, "center_scale", s.center_scale);
    read(o, "virtual_samples", s.virtual_samples);
    read(o, "dataset", s.dataset_path);
    read(o, "hidden", s.hidden);
    read(o, "hessian_budget", s.hessian_budget);
    read(o, "seed", s.seed);
    if (o.contains("synthetic")) {
      const auto &b = o.at("synthetic");
      reject_unknown(b, {"samples", "features", "classes", "spread", "seed"},
                     "objective.synthetic");
      read(b, "samples", s.blobs.samples);
      read(b, "features", s.blobs.features);
      read(b, "classes", s.blobs.classes);
      read(b, "spread", s.blobs.spread);
      read(b, "seed", s.blobs.seed);
    }
  }

  if (j.contains("partition")) {
    const auto &p = j.at("partition");
    reject_unknown(p, {"type", "alpha", "seed"}, "partition");
    const std::string type = p.value("type", std::string("dirichlet"));
    if (type != "dirichlet" && type != "iid") {
      throw ConfigError("partition: type must be 'dirichlet' or 'iid'");
    }
    cfg.partition.dirichlet = type == "dirichlet";
    read(p, "alpha", cfg.partition.alpha);
    read(p, "seed", cfg.partition.seed);
  }

  if (j.contains("heterogeneity")) {
    const auto &h = j.at("heterogeneity");
    reject_unknown(h,
                   {"type", "lr", "epochs", "lr_min", "lr_max", "epochs_min",
                    "epochs_max", "seed"},
                   "heterogeneity");
    const std::string type = h.value("type", std::string("fixed"));
    if (type != "fixed" && type != "random") {
      throw ConfigError("heterogeneity: type must be 'fixed' or 'random'");
    }
    auto &s = cfg.heterogeneity;
    s.random = type == "random";
    read(h, "lr", s.lr);
    read(h, "epochs", s.epochs);
    read(h, "lr_min", s.range.lr_min);
    read(h, "lr_max", s.range.lr_max);
    read(h, "epochs_min", s.range.epochs_min);
    read(h, "epochs_max", s.range.epochs_max);
    read(h, "seed", s.seed);
  }

  if (j.contains("fedecado")) {
    const auto &f = j.at("fedecado");
    reject_unknown(f,
                   {"L", "delta", "dt_0", "safety", "max_backtracks",
                    "restart_each_round", "dt_ref", "sensitivity_refresh",
                    "sync", "inactive", "client_start"},
                   "fedecado");
    auto &s = cfg.fedecado;
    read(f, "L", s.ctrl.inductance);
    read(f, "delta", s.ctrl.delta);
    read(f, "dt_0", s.ctrl.dt_0);
    read(f, "safety", s.ctrl.safety);
    read(f, "max_backtracks", s.ctrl.max_backtracks);
    read(f, "restart_each_round", s.ctrl.restart_each_round);
    if (f.contains("dt_ref") && f.at("dt_ref").is_string()) {
      if (f.at("dt_ref").get<std::string>() != "window") {
        throw ConfigError("fedecado: dt_ref must be a number or 'window'");
      }
      s.dt_ref_window = true;
    } else {
      read(f, "dt_ref", s.dt_ref);
    }
    read(f, "sensitivity_refresh", s.sensitivity_refresh);
    if (f.contains("sync")) {
      const auto v = f.at("sync").get<std::string>();
      if (v == "trajectory") {
        s.sync = SyncMode::kTrajectory;
      } else if (v == "final_state") {
        s.sync = SyncMode::kFinalState;
      } else {
        throw ConfigError("fedecado: sync must be 'trajectory' or "
                          "'final_state'");
      }
    }
    if (f.contains("inactive")) {
      const auto v = f.at("inactive").get<std::string>();
      if (v == "hold") {
        s.inactive = InactivePolicy::kHoldFlow;
      } else if (v == "evolve") {
        s.inactive = InactivePolicy::kEvolveFlow;
      } else {
        throw ConfigError("fedecado: inactive must be 'hold' or 'evolve'");
      }
    }
    if (f.contains("client_start")) {
      const auto v = f.at("client_start").get<std::string>();
      if (v == "central") {
        s.start = ClientStart::kCentral;
      } else if (v == "own") {
        s.start = ClientStart::kOwn;
      } else {
        throw ConfigError("fedecado: client_start must be 'central' or "
                          "'own'");
      }
    }
  }

  if (j.contains("baseline")) {
    const auto &b = j.at("baseline");
    reject_unknown(b, {"mu", "server_lr"}, "baseline");
    read(b, "mu", cfg.baseline.mu);
    read(b, "server_lr", cfg.baseline.server_lr);
  }

  if (j.contains("local")) {
    const auto &l = j.at("local");
    reject_unknown(l, {"minibatch", "endpoint_only", "seed"}, "local");
    read(l, "minibatch", cfg.local.minibatch);
    read(l, "endpoint_only", cfg.local.endpoint_only);
    read(l, "seed", cfg.local.seed);
  }

  validate(cfg);
  return cfg;
}

json config_to_json(const ExperimentConfig &cfg) {
  const auto &o = cfg.objective;
  json obj = {{"kind", std::string(to_string(o.kind))},
              {"hessian_budget", o.hessian_budget}};
  if (o.kind == ObjectiveKind::kQuadratic) {
    obj["dim"] = o.dim;
    obj["eig_min"] = o.eig_min;
    obj["condition"] = o.condition;
    obj["center_scale"] = o.center_scale;
    obj["virtual_samples"] = o.virtual_samples;
  } else if (!o.dataset_path.empty()) {
    obj["dataset"] = o.dataset_path;
  } else {
    obj["synthetic"] = {{"samples", o.blobs.samples},
                        {"features", o.blobs.features},
                        {"classes", o.blobs.classes},
                        {"spread", o.blobs.spread},
                        {"seed", o.blobs.seed}};
  }
  if (o.kind == ObjectiveKind::kMlp) obj["hidden"] = o.hidden;
  if (o.seed) obj["seed"] = *o.seed;

  json part = {{"type", cfg.partition.dirichlet ? "dirichlet" : "iid"}};
  if (cfg.partition.dirichlet) part["alpha"] = cfg.partition.alpha;
  if (cfg.partition.seed) part["seed"] = *cfg.partition.seed;

  const auto &h = cfg.heterogeneity;
  json het = {{"type", h.random ? "random" : "fixed"}};
  if (h.random) {
    het["lr_min"] = h.range.lr_min;
    het["lr_max"] = h.range.lr_max;
    het["epochs_min"] = h.range.epochs_min;
    het["epochs_max"] = h.range.epochs_max;
    if (h.seed) het["seed"] = *h.seed;
  } else {
    het["lr"] = h.lr;
    het["epochs"] = h.epochs;
  }

  const auto &f = cfg.fedecado;
  json fed = {
      {"L", f.ctrl.inductance},
      {"delta", f.ctrl.delta},
      {"dt_0", f.ctrl.dt_0},
      {"safety", f.ctrl.safety},
      {"max_backtracks", f.ctrl.max_backtracks},
      {"restart_each_round", f.ctrl.restart_each_round},
      {"dt_ref", f.dt_ref_window ? json("window") : json(f.dt_ref)},
      {"sensitivity_refresh", f.sensitivity_refresh},
      {"sync", f.sync == SyncMode::kTrajectory ? "trajectory" : "final_state"},
      {"inactive", f.inactive == InactivePolicy::kHoldFlow ? "hold" : "evolve"},
      {"client_start", f.start == ClientStart::kCentral ? "central" : "own"}};

  json out = {{"objective", obj},
              {"n_clients", cfg.n_clients},
              {"participation_ratio", cfg.participation_ratio},
              {"partition", part},
              {"heterogeneity", het},
              {"algo", std::string(to_string(cfg.algo))},
              {"fedecado", fed},
              {"baseline",
               {{"mu", cfg.baseline.mu}, {"server_lr", cfg.baseline.server_lr}}},
              {"local",
               {{"minibatch", cfg.local.minibatch},
                {"endpoint_only", cfg.local.endpoint_only},
                {"seed", cfg.local.seed}}},
              {"rounds_max", cfg.rounds_max},
              {"tol", cfg.tol},
              {"seed", cfg.seed},
              {"workers", cfg.workers},
              {"trace", cfg.trace},
              {"timing", cfg.timing}};
  if (!cfg.output.empty()) out["output"] = cfg.output;
  return out;
}

ExperimentConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception &e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

std::vector<ClientId> sample_active_set(std::size_t n_clients, double ratio,
                                        std::size_t round,
                                        std::uint64_t seed) {
  const std::size_t k = active_count(n_clients, ratio);
  if (k < 1 || k > n_clients) {
    throw ConfigError("sample_active_set: ratio * n must round into [1, n]");
  }
  std::vector<ClientId> ids(n_clients);
  std::iota(ids.begin(), ids.end(), ClientId{0});
  if (k == n_clients) return ids;
  std::mt19937_64 rng(mix_seed(seed, round, 0x5a4d9e));
  // Partial Fisher-Yates: the first k slots are the sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_clients - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

std::uint64_t objective_seed(const ExperimentConfig &cfg) {
  return cfg.objective.seed.value_or(cfg.seed);
}

std::shared_ptr<const Dataset> load_dataset(const ExperimentConfig &cfg) {
  const auto &o = cfg.objective;
  if (o.kind == ObjectiveKind::kQuadratic) {
    return std::make_shared<const Dataset>(
        make_virtual_dataset(o.virtual_samples));
  }
  if (!o.dataset_path.empty()) {
    return std::make_shared<const Dataset>(load_csv(o.dataset_path));
  }
  return std::make_shared<const Dataset>(make_blobs(o.blobs));
}

Partition partition_of(const ExperimentConfig &cfg, const Dataset &data) {
  const std::uint64_t seed = cfg.partition.seed.value_or(cfg.seed);
  Partition p = cfg.partition.dirichlet
                    ? partition_dirichlet(data, cfg.n_clients,
                                          cfg.partition.alpha, seed)
                    : partition_iid(data, cfg.n_clients, seed);
  validate_partition(p, data.size());
  return p;
}

}  // namespace

Partition build_partition(const ExperimentConfig &cfg) {
  validate(cfg);
  return partition_of(cfg, *load_dataset(cfg));
}

Problem build_problem(const ExperimentConfig &cfg) {
  validate(cfg);
  Problem pb;
  pb.dataset = load_dataset(cfg);
  pb.partition = partition_of(cfg, *pb.dataset);
  const std::size_t n = cfg.n_clients;
  const auto &o = cfg.objective;

  if (o.kind == ObjectiveKind::kQuadratic) {
    std::mt19937_64 rng(objective_seed(cfg));
    for (std::size_t i = 0; i < n; ++i) {
      pb.objectives.push_back(make_random_quadratic(
          o.dim, o.eig_min, o.condition, o.center_scale, rng));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (o.kind == ObjectiveKind::kLogistic) {
        pb.objectives.push_back(std::make_shared<SoftmaxRegression>(
            pb.dataset, pb.partition.clients[i]));
      } else {
        pb.objectives.push_back(std::make_shared<TinyMlp>(
            pb.dataset, pb.partition.clients[i], o.hidden));
      }
    }
  }
  pb.total_samples = pb.dataset->size();

  const auto &h = cfg.heterogeneity;
  if (h.random) {
    pb.clients = sample_heterogeneity(n, h.seed.value_or(cfg.seed), h.range);
  } else {
    pb.clients.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      pb.clients[i] = {i, h.lr, h.epochs, 1.0};
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    pb.clients[i].weight = pb.partition.weights[i];
  }
  pb.x0 = pb.objectives.front()->initial_point(objective_seed(cfg));
  return pb;
}

double Problem::global_loss(const ParamVector &x) const {
  double total = 0.0;
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    total += partition.weights[i] * objectives[i]->loss(x);
  }
  return total;
}

ParamVector Problem::global_gradient(const ParamVector &x) const {
  ParamVector g = ParamVector::Zero(x.size());
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    g += partition.weights[i] * objectives[i]->gradient(x);
  }
  return g;
}

double Problem::accuracy(const ParamVector &x) const {
  if (objectives.empty() ||
      objectives.front()->kind() == ObjectiveKind::kQuadratic) {
    return kNaN;
  }
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto &obj : objectives) {
    correct += obj->num_correct(x);
    total += obj->num_samples();
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total)
                   : kNaN;
}

std::vector<const QuadraticObjective *> Problem::quadratics() const {
  std::vector<const QuadraticObjective *> out;
  for (const auto &obj : objectives) {
    const auto *q = dynamic_cast<const QuadraticObjective *>(obj.get());
    if (!q) return {};
    out.push_back(q);
  }
  return out;
}

double quadratic_relative_error(const Problem &problem, const ParamVector &x) {
  const auto qs = problem.quadratics();
  if (qs.empty()) throw Error("quadratic_relative_error: not a quadratic run");
  const ParamVector x_star =
      oracles::quadratic_minimizer(qs, problem.partition.weights);
  return oracles::relative_error(x, x_star);
}

namespace {

std::vector<ParamVector> client_hessians(const Problem &pb,
                                         const ParamVector &x,
                                         std::size_t budget,
                                         std::size_t workers) {
  std::vector<ParamVector> out(pb.num_clients());
  parallel_for(out.size(), workers, [&](std::size_t i) {
    out[i] = mean_hessian(*pb.objectives[i], x, budget);
  });
  return out;
}

SensitivityModel make_sensitivity(const ExperimentConfig &cfg, const Problem &pb,
                                  const ParamVector &x) {
  const auto &params = cfg.fedecado;
  auto hess = client_hessians(pb, x, cfg.objective.hessian_budget, cfg.workers);
  if (!params.dt_ref_window) {
    return build_sensitivity(pb.partition.weights, hess, params.dt_ref,
                             params.sensitivity_refresh);
  }
  std::vector<double> refs;
  for (const auto &c : pb.clients) refs.push_back(c.window());
  return build_sensitivity(pb.partition.weights, hess, refs,
                           params.sensitivity_refresh);
}

double consensus_gap(const ParamVector &x_c,
                     const std::vector<ParamVector> &clients) {
  double gap = 0.0;
  for (const auto &x : clients) gap = std::max(gap, (x_c - x).norm());
  return gap;
}

class Clock {
 public:
  explicit Clock(bool enabled)
      : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

MetricsRow base_row(const Problem &pb, std::size_t round, const Clock &clock,
                    const ParamVector &x,
                    const std::vector<ParamVector> &client_states) {
  MetricsRow row;
  row.round = round;
  row.wall_ms = clock.elapsed_ms();
  row.global_loss = pb.global_loss(x);
  row.grad_norm = pb.global_gradient(x).norm();
  row.consensus_gap = consensus_gap(x, client_states);
  row.accuracy = pb.accuracy(x);
  return row;
}

MetricsRow diagnostic_row(std::size_t round, const Clock &clock) {
  MetricsRow row;
  row.round = round;
  row.wall_ms = clock.elapsed_ms();
  row.global_loss = row.grad_norm = row.consensus_gap = row.accuracy = kNaN;
  row.dt_min = row.dt_mean = row.dt_max = kNaN;
  return row;
}

LocalSolverOptions client_options(const ExperimentConfig &cfg,
                                  std::size_t round, ClientId id) {
  LocalSolverOptions o = cfg.local;
  o.seed = mix_seed(cfg.local.seed ^ cfg.seed, round, id);
  return o;
}

ExperimentResult run_fedecado(const ExperimentConfig &cfg, const Problem &pb) {
  const std::size_t n = pb.num_clients();
  const auto &params = cfg.fedecado;
  const Clock clock(cfg.timing);
  ExperimentResult out;

  SensitivityModel sens = make_sensitivity(cfg, pb, pb.x0);
  FlowState state = make_initial_state(pb.x0, n);
  std::vector<ParamVector> client_states(n, pb.x0);
  double dt = params.ctrl.dt_0;
  ArrowFactorization cache;
  const LossFn loss = cfg.trace ? LossFn([&pb](const ParamVector &x) {
    return pb.global_loss(x);
  })
                                : LossFn{};

  for (std::size_t round = 1; round <= cfg.rounds_max; ++round) {
    if (params.sensitivity_refresh > 0 && round > 1 &&
        (round - 1) % params.sensitivity_refresh == 0) {
      sens = make_sensitivity(cfg, pb, state.x_c);
      cache = {};
    }
    const auto active =
        sample_active_set(n, cfg.participation_ratio, round, cfg.seed);

    RoundContext ctx;
    ctx.sync = params.sync;
    ctx.inactive = params.inactive;
    ctx.prev_flows = state.flows;
    ctx.sources.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      ctx.sources.push_back(ClientSource::held(client_states[i]));
    }

    std::vector<ClientUpdate> updates(active.size());
    RoundResult res;
    try {
      parallel_for(active.size(), cfg.workers, [&](std::size_t a) {
        const ClientId i = active[a];
        const ParamVector &start = params.start == ClientStart::kCentral
                                       ? state.x_c
                                       : client_states[i];
        updates[a] = simulate_local(*pb.objectives[i], pb.clients[i], start,
                                    client_drain(state.flows[i]), state.t_now,
                                    client_options(cfg, round, i));
      });
      for (std::size_t a = 0; a < active.size(); ++a) {
        const ClientId i = active[a];
        client_states[i] = updates[a].final_state();
        out.client_epochs += static_cast<std::size_t>(pb.clients[i].epochs);
        ctx.sources[i] = ClientSource::reported(std::move(updates[a]));
      }
      if (params.ctrl.restart_each_round) dt = params.ctrl.dt_0;
      std::vector<FlowState> *traj = nullptr;
      if (cfg.keep_trajectories) traj = &out.trajectories.emplace_back();
      res = consensus_round(state, ctx, sens, params.ctrl, dt, loss, &cache,
                            traj);
      if (!res.state.x_c.allFinite()) {
        throw Error("central state became non-finite");
      }
    } catch (const Error &e) {
      out.metrics.push_back(diagnostic_row(round, clock));
      throw RunAborted("round " + std::to_string(round) + ": " + e.what(),
                       std::move(out.metrics));
    }

    const FlowState prev = std::move(state);
    state = std::move(res.state);
    dt = res.next_dt;

    MetricsRow row = base_row(pb, round, clock, state.x_c, client_states);
    if (!res.steps.empty()) {
      row.dt_min = std::numeric_limits<double>::infinity();
      row.dt_max = 0.0;
      double sum = 0.0;
      for (const auto &s : res.steps) {
        row.dt_min = std::min(row.dt_min, s.dt);
        row.dt_max = std::max(row.dt_max, s.dt);
        sum += s.dt;
        row.backtracks += s.backtracks;
      }
      row.dt_mean = sum / static_cast<double>(res.steps.size());
    }
    out.metrics.push_back(row);
    out.trace.insert(out.trace.end(), res.steps.begin(), res.steps.end());
    out.rounds_run = round;
    if (!std::isfinite(row.global_loss)) {
      throw RunAborted("round " + std::to_string(round) +
                           ": global loss is not finite",
                       std::move(out.metrics));
    }
    if (steady_state_reached(state, prev, cfg.tol)) {
      out.status = RunStatus::kConverged;
      break;
    }
  }
  out.final_model = state.x_c;
  out.final_state = std::move(state);
  return out;
}

ExperimentResult run_baseline(const ExperimentConfig &cfg, const Problem &pb) {
  const std::size_t n = pb.num_clients();
  BaselineConfig bcfg = cfg.baseline;
  bcfg.algo = cfg.algo == Algorithm::kFedAvg    ? BaselineAlgo::kFedAvg
              : cfg.algo == Algorithm::kFedProx ? BaselineAlgo::kFedProx
                                                : BaselineAlgo::kFedNova;
  const Clock clock(cfg.timing);
  ExperimentResult out;
  ParamVector x = pb.x0;
  std::vector<ParamVector> client_states(n, pb.x0);

  for (std::size_t round = 1; round <= cfg.rounds_max; ++round) {
    const auto active =
        sample_active_set(n, cfg.participation_ratio, round, cfg.seed);
    std::vector<LocalTask> tasks;
    tasks.reserve(active.size());
    for (ClientId i : active) {
      tasks.push_back({pb.objectives[i].get(), pb.clients[i]});
      out.client_epochs += static_cast<std::size_t>(pb.clients[i].epochs);
    }
    LocalSolverOptions opts = cfg.local;
    opts.seed = mix_seed(cfg.local.seed ^ cfg.seed, round, 0);
    std::vector<ParamVector> locals;
    ParamVector next;
    try {
      next = baseline_round(bcfg, x, tasks, opts, cfg.workers, &locals);
      if (!next.allFinite()) throw Error("global model became non-finite");
    } catch (const Error &e) {
      out.metrics.push_back(diagnostic_row(round, clock));
      throw RunAborted("round " + std::to_string(round) + ": " + e.what(),
                       std::move(out.metrics));
    }
    for (std::size_t a = 0; a < active.size(); ++a) {
      client_states[active[a]] = std::move(locals[a]);
    }
    const double change = (next - x).norm();
    x = std::move(next);

    MetricsRow row = base_row(pb, round, clock, x, client_states);
    row.dt_min = row.dt_mean = row.dt_max = kNaN;
    out.metrics.push_back(row);
    out.rounds_run = round;
    if (!std::isfinite(row.global_loss)) {
      throw RunAborted("round " + std::to_string(round) +
                           ": global loss is not finite",
                       std::move(out.metrics));
    }
    if (change <= cfg.tol) {
      out.status = RunStatus::kConverged;
      break;
    }
  }
  out.final_model = std::move(x);
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig &cfg,
                                const Problem &problem) {
  validate(cfg);
  if (problem.num_clients() != cfg.n_clients) {
    throw ConfigError("run_experiment: problem was built for a different "
                      "client count");
  }
  return cfg.algo == Algorithm::kFedEcado ? run_fedecado(cfg, problem)
                                          : run_baseline(cfg, problem);
}

ExperimentResult run_experiment(const ExperimentConfig &cfg) {
  return run_experiment(cfg, build_problem(cfg));
}

void write_metrics_csv(std::ostream &os, const std::vector<MetricsRow> &rows) {
  os << "round,wall_ms,global_loss,grad_norm,consensus_gap,accuracy,dt_min,"
        "dt_mean,dt_max,backtracks\n";
  for (const auto &r : rows) {
    os << r.round << ',' << fmt(r.wall_ms) << ',' << fmt(r.global_loss) << ','
       << fmt(r.grad_norm) << ',' << fmt(r.consensus_gap) << ','
       << fmt(r.accuracy) << ',' << fmt(r.dt_min) << ',' << fmt(r.dt_mean)
       << ',' << fmt(r.dt_max) << ',' << r.backtracks << '\n';
  }
}

void write_trace_csv(std::ostream &os, const std::vector<StepRecord> &rows) {
  os << "round,tau,dt,eps_c,eps_l,backtracks,norm_xc_change,global_loss\n";
  for (const auto &r : rows) {
    os << r.round << ',' << fmt(r.tau) << ',' << fmt(r.dt) << ','
       << fmt(r.eps_c) << ',' << fmt(r.eps_l) << ',' << r.backtracks << ','
       << fmt(r.norm_xc_change) << ',' << fmt(r.global_loss) << '\n';
  }
}

std::string metrics_csv(const std::vector<MetricsRow> &rows) {
  std::ostringstream os;
  write_metrics_csv(os, rows);
  return os.str();
}

void write_outputs(const std::string &dir, const ExperimentConfig &cfg,
                   const ExperimentResult &result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char *name) {
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw Error("cannot write " + (fs::path(dir) / name).string());
    return f;
  };
  {
    auto f = open("metrics.csv");
    write_metrics_csv(f, result.metrics);
  }
  if (cfg.trace && cfg.algo == Algorithm::kFedEcado) {
    auto f = open("trace.csv");
    write_trace_csv(f, result.trace);
  }
  {
    json model = {{"algo", std::string(to_string(cfg.algo))},
                  {"x", std::vector<double>(result.final_model.data(),
                                            result.final_model.data() +
                                                result.final_model.size())}};
    if (result.final_state) model["state"] = state_to_json(*result.final_state);
    open("final_model.json") << model.dump(1) << '\n';
  }
  {
    json summary = {
        {"status", result.status == RunStatus::kConverged ? "converged"
                                                          : "rounds_max"},
        {"rounds", result.rounds_run},
        {"client_epochs", result.client_epochs},
        {"central_steps", result.trace.size()},
        {"config", config_to_json(cfg)}};
    if (!result.metrics.empty()) {
      summary["final_global_loss"] = result.metrics.back().global_loss;
    }
    open("summary.json") << summary.dump(1) << '\n';
  }
}

int exit_code(RunStatus status) {
  return status == RunStatus::kConverged ? 0 : 2;
}

}  // namespace fedecado
