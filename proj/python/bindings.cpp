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

#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"

#include "fedecado/consensus.hpp"
#include "fedecado/experiment.hpp"
#include "fedecado/oracles.hpp"
#include "fedecado/verify.hpp"

namespace py = pybind11;
using namespace fedecado;

namespace {

ExperimentConfig parse(const std::string &config_json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg = config_from_json(j);
  validate(cfg);
  return cfg;
}

py::dict row_to_dict(const MetricsRow &r) {
  py::dict d;
  d["round"] = r.round;
  d["wall_ms"] = r.wall_ms;
  d["global_loss"] = r.global_loss;
  d["grad_norm"] = r.grad_norm;
  d["consensus_gap"] = r.consensus_gap;
  d["accuracy"] = r.accuracy;
  d["dt_min"] = r.dt_min;
  d["dt_mean"] = r.dt_mean;
  d["dt_max"] = r.dt_max;
  d["backtracks"] = r.backtracks;
  return d;
}

py::dict run(const std::string &config_json) {
  const ExperimentConfig cfg = parse(config_json);
  ExperimentResult result;
  std::string status;
  {
    py::gil_scoped_release release;
    result = run_experiment(cfg);
  }
  py::list rows;
  for (const auto &r : result.metrics) rows.append(row_to_dict(r));
  py::dict out;
  out["metrics"] = rows;
  out["metrics_csv"] = metrics_csv(result.metrics);
  out["final_model"] = result.final_model;
  out["converged"] = result.status == RunStatus::kConverged;
  out["exit_code"] = exit_code(result.status);
  out["rounds"] = result.rounds_run;
  out["client_epochs"] = result.client_epochs;
  std::size_t violations = 0;
  for (const auto &s : result.trace) {
    if (!(std::max(s.eps_c, s.eps_l) <= cfg.fedecado.ctrl.delta)) ++violations;
  }
  out["accepted_steps"] = result.trace.size();
  out["lte_violations"] = violations;
  if (cfg.objective.kind == ObjectiveKind::kQuadratic) {
    const Problem problem = build_problem(cfg);
    out["relative_error"] = quadratic_relative_error(problem, result.final_model);
  }
  return out;
}

py::dict partition(const std::string &config_json) {
  const Partition p = build_partition(parse(config_json));
  py::dict out;
  out["clients"] = p.clients;
  out["weights"] = p.weights;
  return out;
}

std::vector<py::tuple> verify_suite(std::uint64_t seed) {
  std::vector<py::tuple> out;
  for (const auto &c : verify::run_suite(seed)) {
    out.push_back(py::make_tuple(c.name, c.ok, c.detail));
  }
  return out;
}

ParamVector gamma_at(const std::vector<double> &times, const Matrix &states,
                     double tau) {
  if (static_cast<Eigen::Index>(times.size()) != states.rows()) {
    throw DimensionError("gamma: need one state row per checkpoint time");
  }
  ClientUpdate u;
  for (std::size_t j = 0; j < times.size(); ++j) {
    u.checkpoints.push_back(
        {times[j], states.row(static_cast<Eigen::Index>(j)).transpose()});
  }
  return gamma(u, tau);
}

ParamVector minimizer(const std::vector<Matrix> &hessians,
                      const std::vector<ParamVector> &centers,
                      const std::vector<double> &weights) {
  if (hessians.size() != centers.size() || hessians.size() != weights.size()) {
    throw DimensionError("quadratic_minimizer: ragged inputs");
  }
  std::vector<QuadraticObjective> objs;
  objs.reserve(hessians.size());
  for (std::size_t i = 0; i < hessians.size(); ++i) {
    objs.emplace_back(hessians[i], centers[i]);
  }
  std::vector<const QuadraticObjective *> ptrs;
  for (const auto &o : objs) ptrs.push_back(&o);
  return oracles::quadratic_minimizer(ptrs, weights);
}

}  // namespace

PYBIND11_MODULE(_fedecado, m) {
  m.doc() = "Native core of the flow-variable federated learning simulator";

  // Translators run newest first, so the derived type is registered last.
  py::register_exception<Error>(m, "FedError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("run", &run, py::arg("config_json"),
        "Run one experiment described by a JSON config string.");
  m.def("partition", &partition, py::arg("config_json"),
        "Client partition of a config as {'clients': ..., 'weights': ...}.");
  m.def("verify", &verify_suite, py::arg("seed") = 20260101,
        "Run the oracle suite; returns (name, ok, detail) tuples.");
  m.def("gamma", &gamma_at, py::arg("times"), py::arg("states"), py::arg("tau"),
        "Piecewise-linear interpolation or extrapolation of a trajectory.");
  m.def("quadratic_minimizer", &minimizer, py::arg("hessians"),
        py::arg("centers"), py::arg("weights"),
        "Minimizer of sum_i w_i * 0.5 (x - c_i)' A_i (x - c_i).");
  m.def("sample_active_set", &sample_active_set, py::arg("n_clients"),
        py::arg("ratio"), py::arg("round"), py::arg("seed"));
}
