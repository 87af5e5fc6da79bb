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

#ifndef FEDECADO_CONSENSUS_HPP_
#define FEDECADO_CONSENSUS_HPP_

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "fedecado/client.hpp"
#include "fedecado/types.hpp"

namespace fedecado {

// Linear interpolation between the checkpoints bracketing tau; linear
// extrapolation with the first/last segment slope outside them.
ParamVector gamma(const ClientUpdate &update, double tau);

// Per-client constant aggregate sensitivity G_i = 1/dt_ref + p_i * H_i,
// diagonal. `compliance[i]` caches the elementwise inverse g_i = 1/G_i.
struct SensitivityModel {
  std::vector<ParamVector> conductance;
  std::vector<ParamVector> compliance;
  double dt_ref = 0.0;
  // Rounds between recomputations; 0 means never.
  std::size_t refresh_period = 0;

  std::size_t num_clients() const { return conductance.size(); }
};

SensitivityModel build_sensitivity(std::span<const double> weights,
                                   const std::vector<ParamVector> &hessians,
                                   double dt_ref,
                                   std::size_t refresh_period = 0);
// Per-client reference steps; `dt_ref` of the result is the smallest one.
SensitivityModel build_sensitivity(std::span<const double> weights,
                                   const std::vector<ParamVector> &hessians,
                                   std::span<const double> dt_refs,
                                   std::size_t refresh_period = 0);

// Central-agent state: x_c plus one flow variable per client (active or not).
struct FlowState {
  ParamVector x_c;
  std::vector<ParamVector> flows;
  double t_now = 0.0;
  std::size_t round = 0;

  std::size_t num_clients() const { return flows.size(); }
};

FlowState make_initial_state(const ParamVector &x0, std::size_t n_clients);

// Sign s of the flow sum in the central row x_c(t+dt) = x_c(t) + s*dt*sum I.
// With the flow row L dI/dt = x_c - x_i this is the only choice that gives a
// stable circuit; see consensus_test for the eigenvalue check.
inline constexpr double kCentralCouplingSign = -1.0;

// The flow variable integrates x_c - x_i, so the current it drives into a
// client node raises x_i. Clients integrate x' = -(p grad f + i_flow), which
// makes the drain they see the negated flow.
inline constexpr double kClientFlowOrientation = -1.0;

inline ParamVector client_drain(const ParamVector &flow) {
  return kClientFlowOrientation * flow;
}

enum class SyncMode {
  // Gamma on the reported trajectory.
  kTrajectory,
  // Raw final state for every tau (no synchronization).
  kFinalState,
};

enum class InactivePolicy {
  // Flows of non-reporting clients stay frozen; they still enter the
  // central sum.
  kHoldFlow,
  // Flows of non-reporting clients keep integrating against their held
  // state.
  kEvolveFlow,
};

// What the central agent knows about one client during a round: either the
// trajectory it just reported or the state it last reported.
class ClientSource {
 public:
  static ClientSource reported(ClientUpdate update);
  static ClientSource held(ParamVector state);

  bool is_reported() const { return update_.has_value(); }
  ParamVector at(double tau, SyncMode mode) const;
  const ParamVector &last_state() const;
  const ClientUpdate &update() const { return *update_; }

 private:
  std::optional<ClientUpdate> update_;
  ParamVector held_;
};

struct RoundContext {
  std::vector<ClientSource> sources;
  // I_L^{i,k}: flows the clients integrated against, held for the round.
  std::vector<ParamVector> prev_flows;
  SyncMode sync = SyncMode::kTrajectory;
  InactivePolicy inactive = InactivePolicy::kHoldFlow;

  std::size_t num_clients() const { return sources.size(); }
  // Whether client i has a solved flow row in this round.
  bool solves(std::size_t i) const;
  // Largest reported window, zero if nothing was reported.
  double horizon() const;
};

// Cached Schur-complement scalars of the arrow system for one
// (dt, inductance, solved set). Solving with a cached factorization is a
// back-substitution only.
struct ArrowFactorization {
  double dt = 0.0;
  double inductance = 0.0;
  std::vector<bool> solved;
  std::vector<ParamVector> inv_pivot;  // 1 / (1 + dt/L * g_i)
  ParamVector inv_schur;               // 1 / (1 - s*dt*dt/L * sum inv_pivot)

  bool matches(double dt_, double inductance_,
               const std::vector<bool> &solved_) const;
};

ArrowFactorization factor_arrow(const RoundContext &ctx,
                                const SensitivityModel &sens, double dt,
                                double inductance);

// One Backward-Euler step from tau to tau + dt of
//   x_c'        = s * sum_i I_i
//   L I_i'      = x_c - (g_i I_i + Gamma_i(tau) - g_i I_i^k)
// solved per coordinate by eliminating the diagonal flow rows.
FlowState be_step(const FlowState &state, const RoundContext &ctx,
                  const SensitivityModel &sens, double tau, double dt,
                  double inductance);
FlowState be_step(const FlowState &state, const RoundContext &ctx,
                  const SensitivityModel &sens, double tau,
                  const ArrowFactorization &factor);

struct LteEstimate {
  double eps_c = 0.0;
  double eps_l = 0.0;
  double max() const { return eps_c > eps_l ? eps_c : eps_l; }
};

// Backward-Euler truncation error of the central and flow equations between
// two consecutive states, reduced by max-norm.
LteEstimate lte(const FlowState &before, const FlowState &after,
                const RoundContext &ctx, const SensitivityModel &sens,
                double tau, double dt, double inductance);

struct StepController {
  double dt_0 = 1e-2;
  double delta = 1e-3;
  double inductance = 1e-3;
  double safety = 0.9;
  int max_backtracks = 40;
  // Start every round from dt_0 instead of the last accepted step.
  bool restart_each_round = true;
};

void validate(const StepController &ctrl);

struct StepResult {
  FlowState state;
  double dt = 0.0;
  LteEstimate lte;
  int backtracks = 0;
};

// Tries dt_try, shrinking by safety * delta / eps until the LTE is within
// delta. `cache` (optional) holds the factorization reused across calls.
StepResult adaptive_step(const FlowState &state, const RoundContext &ctx,
                         const SensitivityModel &sens, double tau,
                         const StepController &ctrl, double dt_try,
                         ArrowFactorization *cache = nullptr);

struct StepRecord {
  std::size_t round = 0;
  double tau = 0.0;
  double dt = 0.0;
  double eps_c = 0.0;
  double eps_l = 0.0;
  int backtracks = 0;
  double norm_xc_change = 0.0;
  double global_loss = 0.0;
};

struct RoundResult {
  FlowState state;
  std::vector<StepRecord> steps;
  // Step size the next round should start from when not restarting.
  double next_dt = 0.0;
};

using LossFn = std::function<double(const ParamVector &)>;

// Advances from state.t_now to state.t_now + ctx.horizon() with repeated
// adaptive steps. The final step is clipped to land on the window end.
// `trajectory`, when given, receives the start state and every accepted
// state of the round.
RoundResult consensus_round(const FlowState &state, const RoundContext &ctx,
                            const SensitivityModel &sens,
                            const StepController &ctrl, double dt_start,
                            const LossFn &loss = {},
                            ArrowFactorization *cache = nullptr,
                            std::vector<FlowState> *trajectory = nullptr);

bool steady_state_reached(const FlowState &state, const FlowState &prev,
                          double tol);

nlohmann::json state_to_json(const FlowState &state);
FlowState state_from_json(const nlohmann::json &j);

}  // namespace fedecado

#endif  // FEDECADO_CONSENSUS_HPP_
