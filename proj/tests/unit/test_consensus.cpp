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
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"

#include "fedecado/client.hpp"
#include "fedecado/consensus.hpp"
#include "fedecado/objective.hpp"

using namespace fedecado;

namespace {

ParamVector vec(std::initializer_list<double> v) {
  ParamVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

ClientUpdate line_update(std::vector<std::pair<double, ParamVector>> pts) {
  ClientUpdate u;
  for (auto &[t, x] : pts) u.checkpoints.push_back({t, x});
  u.window = u.end_time() - u.start_time();
  return u;
}

ClientUpdate constant_update(const ParamVector &x, double t0, double window,
                             int steps = 4) {
  ClientUpdate u;
  for (int j = 0; j <= steps; ++j) {
    u.checkpoints.push_back({t0 + window * j / steps, x});
  }
  u.window = window;
  return u;
}

SensitivityModel manual_sensitivity(std::vector<ParamVector> compliance) {
  SensitivityModel s;
  s.compliance = std::move(compliance);
  for (const auto &g : s.compliance) {
    s.conductance.push_back(g.cwiseInverse());
  }
  s.dt_ref = 1.0;
  return s;
}

RoundContext context(std::vector<ClientSource> sources,
                     std::vector<ParamVector> prev_flows) {
  RoundContext ctx;
  ctx.sources = std::move(sources);
  ctx.prev_flows = std::move(prev_flows);
  return ctx;
}

ParamVector random_vector(std::mt19937_64 &rng, Eigen::Index d, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  ParamVector v(d);
  for (auto &x : v) x = nd(rng);
  return v;
}

}  // namespace

TEST_SUITE("consensus-engine") {

TEST_CASE("gamma interpolates and extrapolates") {
  const auto u = line_update({{0.0, vec({0, 0})}, {1.0, vec({2, 2})}});
  const ParamVector mid = gamma(u, 0.5);
  CHECK(mid[0] == 1.0);
  CHECK(mid[1] == 1.0);

  const auto s = line_update({{0.0, vec({0})}, {1.0, vec({2})}});
  CHECK(gamma(s, 1.5)[0] == 3.0);
  CHECK(gamma(s, -0.5)[0] == -1.0);

  const auto k = constant_update(vec({3.5, -1}), 0.0, 2.0);
  for (double tau : {-1.0, 0.0, 0.3, 1.7, 2.0, 9.0}) {
    CHECK(gamma(k, tau) == vec({3.5, -1}));
  }
}

TEST_CASE("gamma uses the bracketing segment") {
  const auto u = line_update(
      {{0.0, vec({0})}, {1.0, vec({1})}, {2.0, vec({5})}, {3.0, vec({4})}});
  CHECK(gamma(u, 1.5)[0] == doctest::Approx(3.0));
  CHECK(gamma(u, 2.0)[0] == doctest::Approx(5.0));
  CHECK(gamma(u, 2.5)[0] == doctest::Approx(4.5));
  CHECK(gamma(u, 4.0)[0] == doctest::Approx(3.0));
}

TEST_CASE("gamma needs two checkpoints") {
  ClientUpdate u;
  u.checkpoints.push_back({0.0, vec({1})});
  CHECK_THROWS_AS(gamma(u, 0.0), Error);
  CHECK_THROWS_AS(ClientSource::reported(u), Error);
}

TEST_CASE("gamma is linear on shared checkpoint times") {
  std::mt19937_64 rng(21);
  for (int c = 0; c < 20; ++c) {
    ClientUpdate y, z, sum, scaled;
    const double alpha = std::uniform_real_distribution<double>(-3, 3)(rng);
    double t = 0.0;
    for (int j = 0; j < 5; ++j) {
      t += std::uniform_real_distribution<double>(0.1, 1.0)(rng);
      const ParamVector a = random_vector(rng, 3, 1.0);
      const ParamVector b = random_vector(rng, 3, 1.0);
      y.checkpoints.push_back({t, a});
      z.checkpoints.push_back({t, b});
      sum.checkpoints.push_back({t, a + b});
      scaled.checkpoints.push_back({t, alpha * a});
    }
    for (double tau : {0.0, 0.7, 1.9, t + 0.4}) {
      CHECK((gamma(sum, tau) - gamma(y, tau) - gamma(z, tau)).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((gamma(scaled, tau) - alpha * gamma(y, tau)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("sensitivity examples") {
  const std::vector<double> w{0.5};
  const std::vector<ParamVector> h{vec({2, 2})};
  const auto s = build_sensitivity(w, h, 0.1);
  CHECK(s.conductance[0][0] == doctest::Approx(11.0).epsilon(1e-14));
  CHECK(s.conductance[0][1] == doctest::Approx(11.0).epsilon(1e-14));
  CHECK(s.compliance[0][0] == doctest::Approx(1.0 / 11.0).epsilon(1e-14));

  const std::vector<double> zero{0.0};
  const auto z = build_sensitivity(zero, h, 0.1);
  CHECK(z.conductance[0][0] == doctest::Approx(10.0).epsilon(1e-14));

  const std::vector<double> two{0.2, 0.8};
  const std::vector<ParamVector> hh{vec({3, 1}), vec({3, 1})};
  const auto m = build_sensitivity(two, hh, 0.1);
  CHECK((m.conductance[1].array() > m.conductance[0].array()).all());
  for (const auto &g : m.conductance) CHECK((g.array() >= 10.0).all());

  CHECK_THROWS_AS(build_sensitivity(w, h, 0.0), ConfigError);
  CHECK_THROWS_AS(build_sensitivity(w, h, -1.0), ConfigError);
  const std::vector<ParamVector> neg{vec({-1, 0})};
  CHECK_THROWS(build_sensitivity(w, neg, 0.1));
}

TEST_CASE("be_step keeps a single-client fixed point") {
  const ParamVector xc = vec({0.75});
  FlowState state = make_initial_state(xc, 1);
  const auto ctx = context({ClientSource::reported(constant_update(xc, 0.0, 0.01))},
                           {ParamVector::Zero(1)});
  const std::vector<double> w{1.0};
  const auto sens = build_sensitivity(w, {vec({2})}, 0.01);
  const FlowState next = be_step(state, ctx, sens, 0.0, 0.005, 1.0);
  CHECK(next.x_c == xc);
  CHECK(next.flows[0] == ParamVector::Zero(1));
}

TEST_CASE("infinite-sensitivity scalar case matches the 2x2 solve") {
  // L = 1, dt = 1, g = 0. Rows: x' - s I' = x and -x' + I' = I - Gamma.
  const double x = 0.8, flow = -0.3, target = 2.5;
  FlowState state = make_initial_state(vec({x}), 1);
  state.flows[0] << flow;
  const auto ctx = context(
      {ClientSource::reported(constant_update(vec({target}), 0.0, 1.0))},
      {vec({0.4})});
  const auto sens = manual_sensitivity({vec({0.0})});
  const FlowState next = be_step(state, ctx, sens, 0.0, 1.0, 1.0);

  const double s = kCentralCouplingSign;
  Eigen::Matrix2d m;
  m << 1.0, -s, -1.0, 1.0;
  const Eigen::Vector2d sol = m.fullPivLu().solve(Eigen::Vector2d(x, flow - target));
  CHECK(std::abs(next.x_c[0] - sol[0]) <= 1e-12);
  CHECK(std::abs(next.flows[0][0] - sol[1]) <= 1e-12);
  // Hand algebra for s = -1.
  CHECK(std::abs(next.x_c[0] - (x - flow + target) / 2.0) <= 1e-12);
  CHECK(std::abs(next.flows[0][0] - (x + flow - target) / 2.0) <= 1e-12);
}

TEST_CASE("schur solution satisfies the assembled arrow system") {
  std::mt19937_64 rng(5);
  const std::size_t n = 3;
  const Eigen::Index d = 4;
  const double dt = 0.03, L = 0.2, tau = 0.01;
  const double k = dt / L;
  for (int trial = 0; trial < 10; ++trial) {
    FlowState state = make_initial_state(random_vector(rng, d, 1.0), n);
    std::vector<ClientSource> sources;
    std::vector<ParamVector> prev, compliance;
    for (std::size_t i = 0; i < n; ++i) {
      state.flows[i] = random_vector(rng, d, 0.5);
      prev.push_back(random_vector(rng, d, 0.5));
      ParamVector g(d);
      for (auto &v : g) v = std::uniform_real_distribution<double>(0.01, 2.0)(rng);
      compliance.push_back(g);
      sources.push_back(ClientSource::reported(line_update(
          {{0.0, random_vector(rng, d, 1.0)}, {0.05, random_vector(rng, d, 1.0)}})));
    }
    const auto ctx = context(sources, prev);
    const auto sens = manual_sensitivity(compliance);
    const FlowState next = be_step(state, ctx, sens, tau, dt, L);

    for (Eigen::Index j = 0; j < d; ++j) {
      Matrix a = Matrix::Zero(n + 1, n + 1);
      Eigen::VectorXd rhs(n + 1), z(n + 1);
      a(0, 0) = 1.0;
      rhs[0] = state.x_c[j];
      z[0] = next.x_c[j];
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i + 1);
        a(0, r) = -kCentralCouplingSign * dt;
        a(r, 0) = -k;
        a(r, r) = 1.0 + k * compliance[i][j];
        rhs[r] = state.flows[i][j] +
                 k * (compliance[i][j] * prev[i][j] - ctx.sources[i].at(tau + dt, ctx.sync)[j]);
        z[r] = next.flows[i][j];
      }
      CHECK((a * z - rhs).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("cached factorization gives identical steps") {
  std::mt19937_64 rng(8);
  FlowState state = make_initial_state(random_vector(rng, 3, 1.0), 2);
  std::vector<ClientSource> sources;
  for (int i = 0; i < 2; ++i) {
    sources.push_back(ClientSource::reported(line_update(
        {{0.0, random_vector(rng, 3, 1.0)}, {0.02, random_vector(rng, 3, 1.0)}})));
  }
  const auto ctx = context(sources, {ParamVector::Zero(3), ParamVector::Zero(3)});
  const std::vector<double> w{0.3, 0.7};
  const auto sens = build_sensitivity(w, {vec({1, 2, 3}), vec({4, 5, 6})}, 0.01);
  const auto factor = factor_arrow(ctx, sens, 0.004, 0.5);
  CHECK(factor.matches(0.004, 0.5, {true, true}));
  CHECK_FALSE(factor.matches(0.005, 0.5, {true, true}));
  const FlowState a = be_step(state, ctx, sens, 0.0, factor);
  const FlowState b = be_step(state, ctx, sens, 0.0, 0.004, 0.5);
  CHECK(a.x_c == b.x_c);
  CHECK(a.flows == b.flows);
}

TEST_CASE("held clients keep their flow") {
  FlowState state = make_initial_state(vec({1, 1}), 2);
  state.flows[1] = vec({0.25, -0.5});
  std::vector<ClientSource> sources{
      ClientSource::reported(line_update({{0.0, vec({0, 0})}, {0.01, vec({0.1, 0})}})),
      ClientSource::held(vec({3, 3}))};
  auto ctx = context(sources, {ParamVector::Zero(2), state.flows[1]});
  const std::vector<double> w{0.5, 0.5};
  const auto sens = build_sensitivity(w, {vec({1, 1}), vec({1, 1})}, 0.01);
  const FlowState next = be_step(state, ctx, sens, 0.0, 0.002, 0.1);
  CHECK(next.flows[1] == state.flows[1]);
  CHECK(next.flows[0] != state.flows[0]);

  ctx.inactive = InactivePolicy::kEvolveFlow;
  const FlowState evolved = be_step(state, ctx, sens, 0.0, 0.002, 0.1);
  CHECK(evolved.flows[1] != state.flows[1]);
}

TEST_CASE("lte examples") {
  FlowState before = make_initial_state(vec({1, 2}), 2);
  const auto ctx = context({ClientSource::held(vec({1, 2})), ClientSource::held(vec({1, 2}))},
                           {ParamVector::Zero(2), ParamVector::Zero(2)});
  const std::vector<double> w{0.5, 0.5};
  const auto sens = build_sensitivity(w, {vec({1, 1}), vec({1, 1})}, 0.1);
  const auto same = lte(before, before, ctx, sens, 0.0, 0.2, 1.0);
  CHECK(same.eps_c == 0.0);
  CHECK(same.eps_l == 0.0);

  FlowState after = before;
  after.flows[1][0] += 0.7;
  const auto moved = lte(before, after, ctx, sens, 0.0, 0.2, 1.0);
  CHECK(moved.eps_c == doctest::Approx(0.1 * 0.7).epsilon(1e-14));
  CHECK(moved.max() >= moved.eps_c);
}

TEST_CASE("adaptive step accepts a fixed point immediately") {
  const ParamVector xc = vec({0.2, -0.4});
  FlowState state = make_initial_state(xc, 1);
  const auto ctx = context({ClientSource::reported(constant_update(xc, 0.0, 0.01))},
                           {ParamVector::Zero(2)});
  const std::vector<double> w{1.0};
  const auto sens = build_sensitivity(w, {vec({1, 1})}, 0.01);
  StepController ctrl;
  const auto r = adaptive_step(state, ctx, sens, 0.0, ctrl, ctrl.dt_0);
  CHECK(r.backtracks == 0);
  CHECK(r.dt == ctrl.dt_0);
  CHECK(r.lte.max() == 0.0);
}

TEST_CASE("adaptive step shrinks by safety times delta over eps") {
  // Linear 1-client scalar instance; delta is set so dt_0 yields eps = 4 delta.
  FlowState state = make_initial_state(vec({0.0}), 1);
  const auto ctx = context(
      {ClientSource::reported(line_update({{0.0, vec({1.0})}, {0.1, vec({2.0})}}))},
      {ParamVector::Zero(1)});
  const std::vector<double> w{1.0};
  const auto sens = build_sensitivity(w, {vec({1.0})}, 0.01);
  StepController ctrl;
  ctrl.inductance = 0.5;
  ctrl.dt_0 = 0.01;
  const FlowState trial = be_step(state, ctx, sens, 0.0, ctrl.dt_0, ctrl.inductance);
  const double eps0 = lte(state, trial, ctx, sens, 0.0, ctrl.dt_0, ctrl.inductance).max();
  REQUIRE(eps0 > 0.0);
  ctrl.delta = eps0 / 4.0;
  const auto r = adaptive_step(state, ctx, sens, 0.0, ctrl, ctrl.dt_0);
  CHECK(r.backtracks == 1);
  CHECK(r.dt == doctest::Approx(ctrl.safety * ctrl.dt_0 / 4.0).epsilon(1e-12));
  CHECK(r.lte.max() <= ctrl.delta);
}

TEST_CASE("adaptive step reports exhausted backtracking") {
  // A non-finite state keeps the LTE estimate non-finite at every dt.
  FlowState state = make_initial_state(vec({0.0}), 1);
  state.x_c[0] = std::numeric_limits<double>::infinity();
  const auto ctx = context(
      {ClientSource::reported(line_update({{0.0, vec({1.0})}, {0.1, vec({2.0})}}))},
      {ParamVector::Zero(1)});
  const std::vector<double> w{1.0};
  const auto sens = build_sensitivity(w, {vec({1.0})}, 0.01);
  StepController ctrl;
  ctrl.max_backtracks = 3;
  try {
    adaptive_step(state, ctx, sens, 0.0, ctrl, ctrl.dt_0);
    FAIL("expected StepControlError");
  } catch (const StepControlError &e) {
    CHECK(e.dt() == ctrl.dt_0);
    CHECK_FALSE(std::isfinite(e.eps()));
  }
}

TEST_CASE("step controller validation") {
  StepController ctrl;
  CHECK_NOTHROW(validate(ctrl));
  ctrl.safety = 1.5;
  CHECK_THROWS_AS(validate(ctrl), ConfigError);
  ctrl = {};
  ctrl.max_backtracks = 0;
  CHECK_THROWS_AS(validate(ctrl), ConfigError);
  ctrl = {};
  ctrl.inductance = 0.0;
  CHECK_THROWS_AS(validate(ctrl), ConfigError);
}

TEST_CASE("consensus round preserves a global steady state") {
  const ParamVector xc = vec({1, -2, 0.5});
  FlowState state = make_initial_state(xc, 3);
  std::vector<ClientSource> sources;
  for (int i = 0; i < 3; ++i) {
    sources.push_back(ClientSource::reported(constant_update(xc, 0.0, 0.004 * (i + 1))));
  }
  const auto ctx = context(sources, state.flows);
  const std::vector<double> w{0.2, 0.3, 0.5};
  const std::vector<ParamVector> h(3, vec({1, 2, 3}));
  const auto sens = build_sensitivity(w, h, 0.01);
  const auto r = consensus_round(state, ctx, sens, StepController{}, 0.01);
  CHECK(r.state.x_c == xc);
  for (const auto &f : r.state.flows) CHECK(f == ParamVector::Zero(3));
}

TEST_CASE("consensus round covers the longest window") {
  const std::vector<double> windows{1e-3, 5e-3, 1e-2};
  const double t0 = 0.37;
  FlowState state = make_initial_state(vec({0.0, 0.0}), 3);
  state.t_now = t0;
  std::vector<ClientSource> sources;
  for (std::size_t i = 0; i < 3; ++i) {
    sources.push_back(ClientSource::reported(line_update(
        {{t0, vec({0.0, 0.0})}, {t0 + windows[i], vec({1.0 * (i + 1), -1.0})}})));
  }
  const auto ctx = context(sources, state.flows);
  const std::vector<double> w{0.2, 0.3, 0.5};
  const auto sens = build_sensitivity(w, std::vector<ParamVector>(3, vec({1, 1})), 0.01);
  StepController ctrl;
  ctrl.dt_0 = 1e-3;
  std::vector<FlowState> traj;
  const auto r = consensus_round(state, ctx, sens, ctrl, ctrl.dt_0, {}, nullptr, &traj);
  REQUIRE_FALSE(r.steps.empty());
  CHECK(r.steps.front().tau == t0);
  CHECK(r.steps.back().tau + r.steps.back().dt == doctest::Approx(t0 + 1e-2).epsilon(1e-12));
  CHECK(r.state.t_now == doctest::Approx(t0 + 1e-2).epsilon(1e-14));
  CHECK(r.state.round == 1);
  CHECK(traj.size() == r.steps.size() + 1);
  for (const auto &s : r.steps) CHECK(std::max(s.eps_c, s.eps_l) <= ctrl.delta);
}

TEST_CASE("single client quadratic converges to its center") {
  Matrix a = Matrix::Zero(3, 3);
  a.diagonal() << 10.0, 20.0, 30.0;
  const ParamVector center = vec({1.0, -2.0, 0.5});
  const QuadraticObjective q(a, center);
  ClientConfig cfg;
  cfg.lr = 0.01;
  cfg.epochs = 5;
  const std::vector<double> w{1.0};
  const auto sens = build_sensitivity(w, {a.diagonal()}, 0.01);
  StepController ctrl;
  FlowState state = make_initial_state(ParamVector::Zero(3), 1);
  double dt = ctrl.dt_0;
  int rounds = 0;
  for (; rounds < 200; ++rounds) {
    auto up = simulate_local(q, cfg, state.x_c, client_drain(state.flows[0]), state.t_now);
    const auto ctx = context({ClientSource::reported(std::move(up))}, state.flows);
    auto r = consensus_round(state, ctx, sens, ctrl, ctrl.restart_each_round ? ctrl.dt_0 : dt);
    dt = r.next_dt;
    for (const auto &s : r.steps) REQUIRE(std::max(s.eps_c, s.eps_l) <= ctrl.delta);
    state = std::move(r.state);
    if ((state.x_c - center).norm() <= 1e-6) break;
  }
  CHECK(rounds < 200);
  CHECK((state.x_c - center).norm() <= 1e-6);
}

TEST_CASE("steady state detection") {
  FlowState a = make_initial_state(vec({1, 2}), 2);
  CHECK(steady_state_reached(a, a, 1e-6));
  FlowState b = a;
  b.x_c[0] += 1e-5;
  CHECK_FALSE(steady_state_reached(b, a, 1e-6));
  FlowState c = a;
  c.flows[1][1] += 1e-5;
  CHECK_FALSE(steady_state_reached(c, a, 1e-6));
  CHECK(steady_state_reached(c, a, 1e-4));
}

TEST_CASE("flow state json round trip") {
  FlowState s = make_initial_state(vec({0.1, 0.2}), 2);
  s.flows[0] = vec({1e-17, -3.25});
  s.t_now = 0.125;
  s.round = 17;
  const FlowState back = state_from_json(nlohmann::json::parse(state_to_json(s).dump()));
  CHECK(back.x_c == s.x_c);
  CHECK(back.flows == s.flows);
  CHECK(back.t_now == s.t_now);
  CHECK(back.round == s.round);
}

TEST_CASE("shape mismatches are rejected") {
  FlowState s = make_initial_state(vec({0.0}), 2);
  const auto ctx = context({ClientSource::held(vec({0.0}))}, {ParamVector::Zero(1)});
  const std::vector<double> w{1.0};
  const auto sens = build_sensitivity(w, {vec({1.0})}, 0.1);
  CHECK_THROWS_AS(be_step(s, ctx, sens, 0.0, 0.1, 1.0), DimensionError);
}

}  // TEST_SUITE
