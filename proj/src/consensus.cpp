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

#include "fedecado/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fedecado {

ParamVector gamma(const ClientUpdate &update, double tau) {
  const auto &cps = update.checkpoints;
  if (cps.size() < 2) {
    throw Error("gamma: client " + std::to_string(update.id) +
                " reported fewer than 2 checkpoints");
  }
  // Bracketing segment; the end segments also serve extrapolation.
  std::size_t hi = 1;
  if (tau >= cps[cps.size() - 2].t) {
    hi = cps.size() - 1;
  } else if (tau > cps[1].t) {
    const auto it =
        std::upper_bound(cps.begin() + 1, cps.end() - 1, tau,
                         [](double v, const Checkpoint &cp) { return v < cp.t; });
    hi = static_cast<std::size_t>(it - cps.begin());
  }
  const auto &a = cps[hi - 1];
  const auto &b = cps[hi];
  return (b.x - a.x) / (b.t - a.t) * (tau - a.t) + a.x;
}

SensitivityModel build_sensitivity(std::span<const double> weights,
                                   const std::vector<ParamVector> &hessians,
                                   double dt_ref, std::size_t refresh_period) {
  const std::vector<double> refs(hessians.size(), dt_ref);
  if (!(dt_ref > 0.0)) throw ConfigError("sensitivity: dt_ref must be > 0");
  SensitivityModel out = build_sensitivity(weights, hessians, refs, refresh_period);
  out.dt_ref = dt_ref;
  return out;
}

SensitivityModel build_sensitivity(std::span<const double> weights,
                                   const std::vector<ParamVector> &hessians,
                                   std::span<const double> dt_refs,
                                   std::size_t refresh_period) {
  if (weights.size() != hessians.size() || dt_refs.size() != hessians.size()) {
    throw DimensionError("sensitivity: one weight and dt_ref per Hessian required");
  }
  SensitivityModel out;
  out.dt_ref = std::numeric_limits<double>::infinity();
  out.refresh_period = refresh_period;
  out.conductance.reserve(hessians.size());
  out.compliance.reserve(hessians.size());
  for (std::size_t i = 0; i < hessians.size(); ++i) {
    if (!(dt_refs[i] > 0.0)) throw ConfigError("sensitivity: dt_ref must be > 0");
    if ((hessians[i].array() < 0.0).any()) {
      throw ConfigError("sensitivity: Hessian entries must be >= 0");
    }
    out.dt_ref = std::min(out.dt_ref, dt_refs[i]);
    ParamVector g = (1.0 / dt_refs[i] + weights[i] * hessians[i].array()).matrix();
    out.compliance.push_back(g.cwiseInverse());
    out.conductance.push_back(std::move(g));
  }
  return out;
}

FlowState make_initial_state(const ParamVector &x0, std::size_t n_clients) {
  FlowState s;
  s.x_c = x0;
  s.flows.assign(n_clients, ParamVector::Zero(x0.size()));
  return s;
}

ClientSource ClientSource::reported(ClientUpdate update) {
  if (update.checkpoints.size() < 2) {
    throw Error("client " + std::to_string(update.id) +
                ": update needs at least 2 checkpoints");
  }
  ClientSource s;
  s.update_ = std::move(update);
  return s;
}

ClientSource ClientSource::held(ParamVector state) {
  ClientSource s;
  s.held_ = std::move(state);
  return s;
}

ParamVector ClientSource::at(double tau, SyncMode mode) const {
  if (!update_) return held_;
  if (mode == SyncMode::kFinalState) return update_->final_state();
  return gamma(*update_, tau);
}

const ParamVector &ClientSource::last_state() const {
  return update_ ? update_->final_state() : held_;
}

bool RoundContext::solves(std::size_t i) const {
  return sources[i].is_reported() || inactive == InactivePolicy::kEvolveFlow;
}

double RoundContext::horizon() const {
  double t = 0.0;
  for (const auto &s : sources) {
    if (s.is_reported()) t = std::max(t, s.update().window);
  }
  return t;
}

bool ArrowFactorization::matches(double dt_, double inductance_,
                                 const std::vector<bool> &solved_) const {
  return dt == dt_ && inductance == inductance_ && solved == solved_;
}

namespace {

std::vector<bool> solved_mask(const RoundContext &ctx) {
  std::vector<bool> mask(ctx.num_clients());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = ctx.solves(i);
  return mask;
}

void check_shapes(const FlowState &state, const RoundContext &ctx,
                  const SensitivityModel &sens) {
  const std::size_t n = state.num_clients();
  if (ctx.num_clients() != n || ctx.prev_flows.size() != n ||
      sens.num_clients() != n) {
    throw DimensionError("consensus: client count mismatch between state (" +
                         std::to_string(n) + "), round context and "
                         "sensitivity model");
  }
}

// Flow-row right-hand side x_c - (g I + Gamma - g I^k).
ParamVector flow_rhs(const ParamVector &x_c, const ParamVector &flow,
                     const ParamVector &source, const ParamVector &prev_flow,
                     const ParamVector &g) {
  return x_c - (g.cwiseProduct(flow) + source - g.cwiseProduct(prev_flow));
}

}  // namespace

ArrowFactorization factor_arrow(const RoundContext &ctx,
                                const SensitivityModel &sens, double dt,
                                double inductance) {
  if (!(dt > 0.0) || !(inductance > 0.0)) {
    throw ConfigError("factor_arrow: dt and inductance must be > 0");
  }
  ArrowFactorization f;
  f.dt = dt;
  f.inductance = inductance;
  f.solved = solved_mask(ctx);
  f.inv_pivot.resize(ctx.num_clients());
  const double k = dt / inductance;
  const Eigen::Index d =
      sens.num_clients() > 0 ? sens.compliance.front().size() : 0;
  ParamVector pivot_sum = ParamVector::Zero(d);
  for (std::size_t i = 0; i < ctx.num_clients(); ++i) {
    if (!f.solved[i]) continue;
    const ParamVector pivot = (1.0 + k * sens.compliance[i].array()).matrix();
    if ((pivot.array() == 0.0).any() || !pivot.allFinite()) {
      throw Error("factor_arrow: singular flow pivot for client " +
                  std::to_string(i));
    }
    f.inv_pivot[i] = pivot.cwiseInverse();
    pivot_sum += f.inv_pivot[i];
  }
  const ParamVector schur =
      (1.0 - kCentralCouplingSign * dt * k * pivot_sum.array()).matrix();
  if ((schur.array() == 0.0).any() || !schur.allFinite()) {
    throw Error("factor_arrow: singular Schur complement");
  }
  f.inv_schur = schur.cwiseInverse();
  return f;
}

FlowState be_step(const FlowState &state, const RoundContext &ctx,
                  const SensitivityModel &sens, double tau,
                  const ArrowFactorization &factor) {
  check_shapes(state, ctx, sens);
  const double dt = factor.dt;
  const double k = dt / factor.inductance;
  const std::size_t n = state.num_clients();
  const double tau_next = tau + dt;

  // Increment form: with I' = I + dI and x_c' = x_c + dx the rows become
  //   (1 + k g) dI - k dx = k (x_c - Gamma - g (I - I^k)) = r_i
  //   dx - s dt sum dI = s dt sum I = r_c
  // so an exact rest point has zero residuals and yields zero increments.
  // Eliminate each diagonal flow row: dI_i = (r_i + k dx) / a_i.
  std::vector<ParamVector> scaled_rhs(n);
  ParamVector flow_sum = ParamVector::Zero(state.x_c.size());
  for (const auto &f : state.flows) flow_sum += f;
  ParamVector central = kCentralCouplingSign * dt * flow_sum;
  for (std::size_t i = 0; i < n; ++i) {
    if (!factor.solved[i]) continue;
    const ParamVector source = ctx.sources[i].at(tau_next, ctx.sync);
    const ParamVector r =
        k * (state.x_c - source -
             sens.compliance[i].cwiseProduct(state.flows[i] - ctx.prev_flows[i]));
    scaled_rhs[i] = r.cwiseProduct(factor.inv_pivot[i]);
    central += kCentralCouplingSign * dt * scaled_rhs[i];
  }

  FlowState next = state;
  const ParamVector dx = central.cwiseProduct(factor.inv_schur);
  next.x_c += dx;
  for (std::size_t i = 0; i < n; ++i) {
    if (!factor.solved[i]) continue;
    next.flows[i] += scaled_rhs[i] + k * dx.cwiseProduct(factor.inv_pivot[i]);
  }
  next.t_now = tau_next;
  return next;
}

FlowState be_step(const FlowState &state, const RoundContext &ctx,
                  const SensitivityModel &sens, double tau, double dt,
                  double inductance) {
  check_shapes(state, ctx, sens);
  return be_step(state, ctx, sens, tau,
                 factor_arrow(ctx, sens, dt, inductance));
}

LteEstimate lte(const FlowState &before, const FlowState &after,
                const RoundContext &ctx, const SensitivityModel &sens,
                double tau, double dt, double inductance) {
  check_shapes(before, ctx, sens);
  const std::size_t n = before.num_clients();
  const Eigen::Index d = before.x_c.size();

  ParamVector flow_change = ParamVector::Zero(d);
  for (std::size_t i = 0; i < n; ++i) {
    flow_change += after.flows[i] - before.flows[i];
  }
  LteEstimate out;
  out.eps_c = 0.5 * dt * flow_change.cwiseAbs().maxCoeff();

  const double scale = 0.5 * dt / inductance;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ctx.solves(i)) continue;
    const auto &g = sens.compliance[i];
    const ParamVector r0 =
        flow_rhs(before.x_c, before.flows[i], ctx.sources[i].at(tau, ctx.sync),
                 ctx.prev_flows[i], g);
    const ParamVector r1 = flow_rhs(after.x_c, after.flows[i],
                                    ctx.sources[i].at(tau + dt, ctx.sync),
                                    ctx.prev_flows[i], g);
    const ParamVector diff = r1 - r0;
    if (!diff.allFinite()) {
      out.eps_l = std::numeric_limits<double>::infinity();
      continue;
    }
    out.eps_l = std::max(out.eps_l, scale * diff.cwiseAbs().maxCoeff());
  }
  // A non-finite trial must never pass the tolerance test.
  if (!flow_change.allFinite() || !after.x_c.allFinite()) {
    out.eps_c = std::numeric_limits<double>::infinity();
  }
  return out;
}

void validate(const StepController &ctrl) {
  if (!(ctrl.dt_0 > 0.0) || !(ctrl.delta > 0.0) || !(ctrl.inductance > 0.0)) {
    throw ConfigError("step controller: dt_0, delta and L must be > 0");
  }
  if (!(ctrl.safety > 0.0 && ctrl.safety <= 1.0)) {
    throw ConfigError("step controller: safety must lie in (0, 1]");
  }
  if (ctrl.max_backtracks < 1) {
    throw ConfigError("step controller: max_backtracks must be >= 1");
  }
}

StepResult adaptive_step(const FlowState &state, const RoundContext &ctx,
                         const SensitivityModel &sens, double tau,
                         const StepController &ctrl, double dt_try,
                         ArrowFactorization *cache) {
  validate(ctrl);
  if (!(dt_try > 0.0)) throw ConfigError("adaptive_step: dt must be > 0");
  ArrowFactorization local;
  ArrowFactorization &factor = cache ? *cache : local;
  const auto mask = solved_mask(ctx);

  double dt = dt_try;
  double eps = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt <= ctrl.max_backtracks; ++attempt) {
    if (!factor.matches(dt, ctrl.inductance, mask)) {
      factor = factor_arrow(ctx, sens, dt, ctrl.inductance);
    }
    FlowState trial = be_step(state, ctx, sens, tau, factor);
    const LteEstimate err =
        lte(state, trial, ctx, sens, tau, dt, ctrl.inductance);
    eps = err.max();
    if (eps <= ctrl.delta) {
      return {std::move(trial), dt, err, attempt};
    }
    if (!std::isfinite(eps) || attempt == ctrl.max_backtracks) break;
    dt *= ctrl.safety * ctrl.delta / eps;
    if (!(dt > 0.0)) break;
  }
  throw StepControlError(
      "adaptive_step: LTE " + std::to_string(eps) + " still above delta " +
          std::to_string(ctrl.delta) + " at dt " + std::to_string(dt) +
          " after " + std::to_string(ctrl.max_backtracks) + " backtracks",
      dt, eps);
}

RoundResult consensus_round(const FlowState &state, const RoundContext &ctx,
                            const SensitivityModel &sens,
                            const StepController &ctrl, double dt_start,
                            const LossFn &loss, ArrowFactorization *cache,
                            std::vector<FlowState> *trajectory) {
  check_shapes(state, ctx, sens);
  RoundResult out;
  out.state = state;
  out.state.round = state.round + 1;
  out.next_dt = dt_start;
  if (trajectory) trajectory->push_back(out.state);

  const double t_begin = state.t_now;
  const double t_end = t_begin + ctx.horizon();
  double tau = t_begin;
  double dt = dt_start;
  // Stop when the remaining window is round-off relative to its length.
  const double eps_time = 1e-12 * std::max(1.0, std::abs(t_end));
  while (t_end - tau > eps_time) {
    const double remaining = t_end - tau;
    const bool clipped = remaining <= dt * (1.0 + 1e-9);
    const double dt_try = clipped ? remaining : dt;

    StepResult step =
        adaptive_step(out.state, ctx, sens, tau, ctrl, dt_try, cache);
    const bool finishes = clipped && step.backtracks == 0;
    if (!clipped || step.backtracks > 0) dt = std::min(dt, step.dt);

    StepRecord rec;
    rec.round = out.state.round;
    rec.tau = tau;
    rec.dt = step.dt;
    rec.eps_c = step.lte.eps_c;
    rec.eps_l = step.lte.eps_l;
    rec.backtracks = step.backtracks;
    rec.norm_xc_change = (step.state.x_c - out.state.x_c).norm();

    const std::size_t round = out.state.round;
    out.state = std::move(step.state);
    out.state.round = round;
    tau = finishes ? t_end : tau + step.dt;
    out.state.t_now = tau;
    rec.global_loss =
        loss ? loss(out.state.x_c) : std::numeric_limits<double>::quiet_NaN();
    out.steps.push_back(rec);
    if (trajectory) trajectory->push_back(out.state);
  }
  out.state.t_now = t_end;
  if (trajectory && !trajectory->empty()) trajectory->back().t_now = t_end;
  out.next_dt = dt;
  return out;
}

bool steady_state_reached(const FlowState &state, const FlowState &prev,
                          double tol) {
  if ((state.x_c - prev.x_c).norm() > tol) return false;
  for (std::size_t i = 0; i < state.flows.size(); ++i) {
    if ((state.flows[i] - prev.flows[i]).norm() > tol) return false;
  }
  return true;
}

namespace {
std::vector<double> to_vec(const ParamVector &v) {
  return {v.data(), v.data() + v.size()};
}
ParamVector from_vec(const std::vector<double> &v) {
  return Eigen::Map<const ParamVector>(v.data(),
                                       static_cast<Eigen::Index>(v.size()));
}
}  // namespace

nlohmann::json state_to_json(const FlowState &state) {
  nlohmann::json flows = nlohmann::json::array();
  for (const auto &f : state.flows) flows.push_back(to_vec(f));
  return {{"x_c", to_vec(state.x_c)},
          {"flows", flows},
          {"t_now", state.t_now},
          {"round", state.round}};
}

FlowState state_from_json(const nlohmann::json &j) {
  FlowState s;
  s.x_c = from_vec(j.at("x_c").get<std::vector<double>>());
  for (const auto &f : j.at("flows")) {
    s.flows.push_back(from_vec(f.get<std::vector<double>>()));
    require_dim(s.flows.back(), s.x_c.size(), "state_from_json flow");
  }
  s.t_now = j.at("t_now").get<double>();
  s.round = j.at("round").get<std::size_t>();
  return s;
}

}  // namespace fedecado
