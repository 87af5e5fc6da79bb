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

#include "fedecado/verify.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include "fedecado/consensus.hpp"
#include "fedecado/experiment.hpp"
#include "fedecado/objective.hpp"
#include "fedecado/oracles.hpp"
#include "fedecado/partition.hpp"

namespace fedecado::verify {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng &rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double log_uniform(Rng &rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

int pick(Rng &rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

ParamVector random_vector(Rng &rng, Eigen::Index d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ParamVector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v[j] = n(rng);
  return v;
}

std::vector<double> random_times(Rng &rng, int count, double t0) {
  std::vector<double> t{t0};
  for (int j = 1; j < count; ++j) t.push_back(t.back() + uniform(rng, 0.05, 1.0));
  return t;
}

ClientUpdate make_update(const std::vector<double> &t,
                         const std::vector<ParamVector> &x) {
  ClientUpdate u;
  for (std::size_t j = 0; j < t.size(); ++j) u.checkpoints.push_back({t[j], x[j]});
  u.window = t.back() - t.front();
  return u;
}

ClientUpdate random_update(Rng &rng, Eigen::Index d, double t0) {
  const auto t = random_times(rng, pick(rng, 2, 8), t0);
  std::vector<ParamVector> x;
  for (std::size_t j = 0; j < t.size(); ++j) x.push_back(random_vector(rng, d));
  return make_update(t, x);
}

std::string describe(const char *what, double value) {
  std::ostringstream os;
  os << what << ' ' << value;
  return os.str();
}

struct RandomCase {
  FlowState state;
  RoundContext ctx;
  SensitivityModel sens;
  double tau = 0.0;
  double dt = 0.0;
  double inductance = 0.0;
};

RandomCase random_case(Rng &rng) {
  RandomCase c;
  const std::size_t n = static_cast<std::size_t>(pick(rng, 1, 8));
  const Eigen::Index d = pick(rng, 1, 16);
  c.tau = uniform(rng, 0.0, 2.0);
  c.dt = log_uniform(rng, 1e-4, 1e-1);
  c.inductance = log_uniform(rng, 1e-3, 1.0);
  c.state = make_initial_state(random_vector(rng, d), n);
  c.state.t_now = c.tau;
  std::vector<double> weights(n);
  std::vector<ParamVector> hessians(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.state.flows[i] = random_vector(rng, d);
    weights[i] = uniform(rng, 0.0, 1.0);
    hessians[i] = random_vector(rng, d, 3.0).cwiseAbs();
    c.ctx.prev_flows.push_back(random_vector(rng, d));
    if (pick(rng, 0, 3) == 0) {
      c.ctx.sources.push_back(ClientSource::held(random_vector(rng, d)));
    } else {
      c.ctx.sources.push_back(
          ClientSource::reported(random_update(rng, d, c.tau)));
    }
  }
  c.ctx.sync = pick(rng, 0, 1) ? SyncMode::kTrajectory : SyncMode::kFinalState;
  c.ctx.inactive =
      pick(rng, 0, 1) ? InactivePolicy::kHoldFlow : InactivePolicy::kEvolveFlow;
  c.sens = build_sensitivity(weights, hessians, log_uniform(rng, 1e-3, 1.0));
  return c;
}

}  // namespace

CheckResult gamma_linearity(std::uint64_t seed, int cases) {
  Rng rng(seed);
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    const Eigen::Index d = pick(rng, 1, 8);
    const auto t = random_times(rng, pick(rng, 2, 10), uniform(rng, -1.0, 1.0));
    std::vector<ParamVector> y, z, sum, scaled;
    const double alpha = uniform(rng, -3.0, 3.0);
    for (std::size_t j = 0; j < t.size(); ++j) {
      y.push_back(random_vector(rng, d));
      z.push_back(random_vector(rng, d));
      sum.push_back(y.back() + z.back());
      scaled.push_back(alpha * y.back());
    }
    const auto uy = make_update(t, y), uz = make_update(t, z);
    const auto us = make_update(t, sum), ua = make_update(t, scaled);
    const double span = t.back() - t.front();
    for (int k = 0; k < 10; ++k) {
      const double tau = uniform(rng, t.front() - 0.5 * span, t.back() + 0.5 * span);
      worst = std::max(
          worst,
          (gamma(us, tau) - gamma(uy, tau) - gamma(uz, tau)).cwiseAbs().maxCoeff());
      worst = std::max(
          worst, (gamma(ua, tau) - alpha * gamma(uy, tau)).cwiseAbs().maxCoeff());
    }
  }
  return {"gamma additivity and homogeneity", worst <= 1e-12,
          describe("max deviation", worst)};
}

CheckResult gamma_monotonicity(std::uint64_t seed, int cases, int points) {
  Rng rng(seed);
  int violations = 0;
  for (int c = 0; c < cases; ++c) {
    const Eigen::Index d = pick(rng, 1, 6);
    const auto t = random_times(rng, pick(rng, 2, 10), uniform(rng, 0.0, 1.0));
    std::vector<ParamVector> y, z, k;
    const ParamVector konst = random_vector(rng, d);
    for (std::size_t j = 0; j < t.size(); ++j) {
      z.push_back(random_vector(rng, d));
      const ParamVector gap =
          (random_vector(rng, d).cwiseAbs().array() + 1e-3).matrix();
      y.push_back(z.back() + gap);
      k.push_back(konst);
    }
    const auto uy = make_update(t, y), uz = make_update(t, z);
    const auto uk = make_update(t, k);
    for (int p = 0; p < points; ++p) {
      const double tau = uniform(rng, t.front(), t.back());
      if (!((gamma(uy, tau) - gamma(uz, tau)).array() > 0.0).all()) ++violations;
      const double outside = uniform(rng, t.front() - 5.0, t.back() + 5.0);
      if (gamma(uk, outside) != konst) ++violations;
    }
  }
  return {"gamma monotonicity and constant preservation", violations == 0,
          describe("violations", violations)};
}

CheckResult solver_equivalence(std::uint64_t seed, int cases) {
  Rng rng(seed);
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    const RandomCase rc = random_case(rng);
    const FlowState fast =
        be_step(rc.state, rc.ctx, rc.sens, rc.tau, rc.dt, rc.inductance);
    const auto dense = oracles::dense_be_reference(rc.state, rc.ctx, rc.sens,
                                                   rc.tau, rc.dt, rc.inductance);
    worst = std::max(worst, oracles::stack_difference(fast, dense.state)
                                .cwiseAbs()
                                .maxCoeff());
  }
  return {"schur be_step matches dense reference", worst <= 1e-10,
          describe("max discrepancy", worst)};
}

CheckResult gradient_fidelity(std::uint64_t seed, int points) {
  Rng rng(seed);
  BlobSpec blobs;
  blobs.samples = 60;
  blobs.features = 3;
  blobs.classes = 4;
  blobs.seed = seed;
  auto data = std::make_shared<const Dataset>(make_blobs(blobs));
  std::vector<std::size_t> idx(data->size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<ObjectivePtr> objs{
      make_random_quadratic(6, 0.5, 20.0, 1.0, rng),
      std::make_shared<SoftmaxRegression>(data, idx),
      std::make_shared<TinyMlp>(data, idx, 5)};
  double worst = 0.0;
  for (const auto &obj : objs) {
    for (int p = 0; p < points; ++p) {
      const ParamVector x = random_vector(rng, obj->dim(), 0.5);
      worst = std::max(worst,
                       oracles::relative_error(oracles::finite_diff_gradient(*obj, x),
                                               gradient(*obj, x)));
    }
  }
  return {"analytic gradients match finite differences", worst <= 1e-5,
          describe("max relative error", worst)};
}

CheckResult hessian_diagonal(std::uint64_t seed) {
  Rng rng(seed);
  BlobSpec blobs;
  blobs.samples = 4;
  blobs.features = 2;
  blobs.classes = 2;
  blobs.seed = seed;
  auto data = std::make_shared<const Dataset>(make_blobs(blobs));
  std::vector<std::size_t> idx{0, 1, 2, 3};
  const SoftmaxRegression logistic(data, idx);
  double worst = 0.0;
  for (int p = 0; p < 5; ++p) {
    const ParamVector x = random_vector(rng, logistic.dim(), 0.5);
    const ParamVector gn = mean_hessian(logistic, x, 4);
    const ParamVector fd = oracles::finite_diff_hessian_diag(logistic, x);
    for (Eigen::Index j = 0; j < gn.size(); ++j) {
      worst = std::max(worst, std::abs(gn[j] - fd[j]) / std::max(fd[j], 1e-8));
    }
  }
  const TinyMlp mlp(data, idx, 4);
  bool nonneg = true;
  for (int p = 0; p < 5; ++p) {
    const ParamVector x = random_vector(rng, mlp.dim(), 1.0);
    nonneg = nonneg && (mean_hessian(mlp, x, 4).array() >= 0.0).all();
  }
  return {"gauss-newton hessian diagonal", worst <= 0.1 && nonneg,
          describe("logistic max relative deviation", worst) +
              (nonneg ? "" : "; mlp entry negative")};
}

CheckResult sign_stability() {
  bool ok = true;
  double worst_frozen = -1e300;
  for (double pa : {1e-2, 1.0, 1e2}) {
    for (double ind : {1e-3, 1.0, 10.0}) {
      const auto ev = oracles::circuit_eigenvalues(pa, ind);
      worst_frozen = std::max(worst_frozen, ev.real().maxCoeff());
      const auto flipped =
          oracles::circuit_eigenvalues(pa, ind, -kCentralCouplingSign);
      ok = ok && ev.real().maxCoeff() < 0.0 && flipped.real().maxCoeff() > 0.0;
      ok = ok && oracles::be_spectral_radius(pa, ind, 1e-3) < 1.0;
    }
  }
  return {"coupling sign yields a stable circuit", ok,
          describe("largest real part", worst_frozen)};
}

CheckResult series_bound(std::uint64_t seed, int cases) {
  Rng rng(seed);
  int failures = 0;
  for (int c = 0; c < cases; ++c) {
    const int len = pick(rng, 1, 50);
    const double m = uniform(rng, 0.1, 2.0);
    const double r = uniform(rng, -0.95, 0.95);
    std::vector<double> gammas(static_cast<std::size_t>(len)), xs(gammas.size());
    for (int l = 0; l < len; ++l) {
      gammas[static_cast<std::size_t>(l)] = m * std::pow(r, l);
      xs[static_cast<std::size_t>(l)] = uniform(rng, -2.0, 2.0);
    }
    const auto bound = oracles::series_bound(gammas, xs, log_uniform(rng, 0.1, 10.0),
                                             log_uniform(rng, 1e-3, 1.0));
    if (!bound.holds()) ++failures;
  }
  return {"beta-norm convolution bound", failures == 0,
          describe("failures", failures)};
}

CheckResult partition_invariants(std::uint64_t seed) {
  BlobSpec blobs;
  blobs.samples = 2000;
  blobs.features = 2;
  blobs.classes = 10;
  blobs.seed = seed;
  const Dataset data = make_blobs(blobs);
  try {
    for (double alpha : {0.05, 0.1, 0.5, 10.0}) {
      const auto p = partition_dirichlet(data, 100, alpha, seed);
      validate_partition(p, data.size());
      for (double w : p.weights) {
        if (!(w > 0.0)) return {"dirichlet partition invariants", false, "p_i = 0"};
      }
    }
  } catch (const Error &e) {
    return {"dirichlet partition invariants", false, e.what()};
  }
  return {"dirichlet partition invariants", true, "4 alphas x 100 clients"};
}

CheckResult minimizer_residual(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::shared_ptr<QuadraticObjective>> owned;
  std::vector<const QuadraticObjective *> objs;
  std::vector<double> w;
  for (int i = 0; i < 6; ++i) {
    owned.push_back(make_random_quadratic(12, 0.1, 50.0, 1.0, rng));
    objs.push_back(owned.back().get());
    w.push_back(uniform(rng, 0.1, 1.0));
  }
  const ParamVector x = oracles::quadratic_minimizer(objs, w);
  Matrix m = Matrix::Zero(12, 12);
  ParamVector rhs = ParamVector::Zero(12);
  for (std::size_t i = 0; i < objs.size(); ++i) {
    m += w[i] * objs[i]->a();
    rhs += w[i] * objs[i]->a() * objs[i]->center();
  }
  const double res = (m * x - rhs).norm();
  return {"quadratic minimizer residual", res <= 1e-10, describe("residual", res)};
}

CheckResult fixed_point(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const std::size_t n = static_cast<std::size_t>(pick(rng, 1, 6));
    const Eigen::Index d = pick(rng, 1, 10);
    std::vector<std::shared_ptr<QuadraticObjective>> owned;
    std::vector<const QuadraticObjective *> objs;
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    std::vector<ParamVector> hess;
    for (std::size_t i = 0; i < n; ++i) {
      owned.push_back(make_random_quadratic(d, 1.0, 10.0, 1.0, rng));
      objs.push_back(owned.back().get());
      hess.push_back(owned.back()->a().diagonal());
    }
    const FlowState star = oracles::stationary_state(objs, w);
    const auto sens = build_sensitivity(w, hess, 1e-2);
    RoundContext ctx;
    ctx.prev_flows = star.flows;
    for (std::size_t i = 0; i < n; ++i) {
      ClientConfig cfg{i, 1e-3, pick(rng, 1, 5), w[i]};
      ctx.sources.push_back(ClientSource::reported(simulate_local(
          *objs[i], cfg, star.x_c, client_drain(star.flows[i]), 0.0)));
    }
    StepController ctrl;
    const auto res = consensus_round(star, ctx, sens, ctrl, ctrl.dt_0);
    worst = std::max(worst,
                     oracles::stack_difference(res.state, star).cwiseAbs().maxCoeff());
  }
  return {"stationary states are preserved", worst <= 1e-10,
          describe("max drift", worst)};
}

CheckResult small_quadratic_run(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.n_clients = 4;
  cfg.objective.dim = 6;
  cfg.objective.virtual_samples = 200;
  cfg.rounds_max = 300;
  cfg.tol = 1e-10;
  cfg.seed = seed;
  cfg.trace = false;
  cfg.keep_trajectories = true;
  const Problem pb = build_problem(cfg);
  const auto result = run_experiment(cfg, pb);
  const double err = quadratic_relative_error(pb, result.final_model);
  bool lte_ok = true;
  for (const auto &s : result.trace) {
    lte_ok = lte_ok && std::max(s.eps_c, s.eps_l) <= cfg.fedecado.ctrl.delta;
  }
  const FlowState star =
      oracles::stationary_state(pb.quadratics(), pb.partition.weights);
  const auto ratios = oracles::contraction_ratio(result.trajectories, star);
  bool contracts = true;
  for (std::size_t k = 5; k < ratios.size(); ++k) {
    // Rounds already at round-off level carry no contraction signal.
    if (ratios[k] >= 1.0 &&
        oracles::beta_norm(oracles::round_error_series(result.trajectories[k], star),
                           {}) > 1e-12) {
      contracts = false;
    }
  }
  std::ostringstream detail;
  detail << "relative error " << err << ", lte " << (lte_ok ? "ok" : "violated")
         << ", contraction " << (contracts ? "ok" : "violated");
  return {"small quadratic run converges", err <= 1e-6 && lte_ok && contracts,
          detail.str()};
}

std::vector<CheckResult> run_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  auto guarded = [&out](auto &&fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception &e) {
      out.push_back({"oracle check", false, std::string("threw: ") + e.what()});
    }
  };
  guarded([&] { return gamma_linearity(seed); });
  guarded([&] { return gamma_monotonicity(seed + 1); });
  guarded([&] { return solver_equivalence(seed + 2); });
  guarded([&] { return gradient_fidelity(seed + 3); });
  guarded([&] { return hessian_diagonal(seed + 4); });
  guarded([] { return sign_stability(); });
  guarded([&] { return series_bound(seed + 5); });
  guarded([&] { return partition_invariants(seed + 6); });
  guarded([&] { return minimizer_residual(seed + 7); });
  guarded([&] { return fixed_point(seed + 8); });
  guarded([&] { return small_quadratic_run(seed + 9); });
  return out;
}

int write_tap(std::ostream &os, const std::vector<CheckResult> &results) {
  os << "TAP version 13\n1.." << results.size() << '\n';
  int failed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto &r = results[i];
    if (!r.ok) ++failed;
    os << (r.ok ? "ok " : "not ok ") << (i + 1) << " - " << r.name;
    if (!r.detail.empty()) os << " # " << r.detail;
    os << '\n';
  }
  return failed;
}

}  // namespace fedecado::verify
