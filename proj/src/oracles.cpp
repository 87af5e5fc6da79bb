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

#include "fedecado/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace fedecado::oracles {

ParamVector quadratic_minimizer(
    std::span<const QuadraticObjective *const> objectives,
    std::span<const double> weights) {
  if (objectives.empty() || objectives.size() != weights.size()) {
    throw DimensionError("quadratic_minimizer: need one weight per objective");
  }
  const Eigen::Index d = objectives.front()->dim();
  Matrix m = Matrix::Zero(d, d);
  ParamVector rhs = ParamVector::Zero(d);
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    require_dim(objectives[i]->center(), d, "quadratic_minimizer center");
    m += weights[i] * objectives[i]->a();
    rhs += weights[i] * objectives[i]->a() * objectives[i]->center();
  }
  Eigen::FullPivLU<Matrix> lu(m);
  if (!lu.isInvertible()) {
    m += 1e-12 * Matrix::Identity(d, d);
    lu.compute(m);
    if (!lu.isInvertible()) {
      throw Error("quadratic_minimizer: weighted Hessian singular after "
                  "regularization");
    }
  }
  return lu.solve(rhs);
}

ParamVector finite_diff_gradient(const LocalObjective &obj,
                                 const ParamVector &x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_gradient: h must be > 0");
  require_dim(x, obj.dim(), "finite_diff_gradient");
  ParamVector g(x.size());
  ParamVector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    const double up = obj.loss(probe);
    probe[j] = x[j] - h;
    const double down = obj.loss(probe);
    probe[j] = x[j];
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

ParamVector finite_diff_hessian_diag(const LocalObjective &obj,
                                     const ParamVector &x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_hessian_diag: h must be > 0");
  require_dim(x, obj.dim(), "finite_diff_hessian_diag");
  const double count =
      obj.num_samples() > 0 ? static_cast<double>(obj.num_samples()) : 1.0;
  const double center = obj.loss(x);
  ParamVector out(x.size());
  ParamVector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    const double up = obj.loss(probe);
    probe[j] = x[j] - h;
    const double down = obj.loss(probe);
    probe[j] = x[j];
    out[j] = (up - 2.0 * center + down) / (h * h) / count;
  }
  return out;
}

double relative_error(const ParamVector &approx, const ParamVector &exact) {
  const double scale = std::max(exact.norm(), 1e-12);
  return (approx - exact).norm() / scale;
}

DenseBeResult dense_be_reference(const FlowState &state,
                                 const RoundContext &ctx,
                                 const SensitivityModel &sens, double tau,
                                 double dt, double inductance) {
  const std::size_t n = state.num_clients();
  const Eigen::Index d = state.x_c.size();
  if (ctx.num_clients() != n || sens.num_clients() != n ||
      ctx.prev_flows.size() != n) {
    throw DimensionError("dense_be_reference: client count mismatch");
  }
  if (!(dt > 0.0) || !(inductance > 0.0)) {
    throw ConfigError("dense_be_reference: dt and L must be > 0");
  }
  const Eigen::Index size = static_cast<Eigen::Index>(n + 1) * d;
  Matrix a = Matrix::Zero(size, size);
  ParamVector b = ParamVector::Zero(size);
  const double k = dt / inductance;
  auto block = [d](std::size_t blk) { return static_cast<Eigen::Index>(blk) * d; };

  for (Eigen::Index j = 0; j < d; ++j) {
    a(j, j) = 1.0;
    b[j] = state.x_c[j];
    for (std::size_t i = 0; i < n; ++i) {
      a(j, block(i + 1) + j) = -kCentralCouplingSign * dt;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index row0 = block(i + 1);
    if (!ctx.solves(i)) {
      for (Eigen::Index j = 0; j < d; ++j) {
        a(row0 + j, row0 + j) = 1.0;
        b[row0 + j] = state.flows[i][j];
      }
      continue;
    }
    const ParamVector source = ctx.sources[i].at(tau + dt, ctx.sync);
    const ParamVector &g = sens.compliance[i];
    for (Eigen::Index j = 0; j < d; ++j) {
      a(row0 + j, row0 + j) = 1.0 + k * g[j];
      a(row0 + j, j) = -k;
      b[row0 + j] =
          state.flows[i][j] + k * (g[j] * ctx.prev_flows[i][j] - source[j]);
    }
  }

  Eigen::JacobiSVD<Matrix> svd(a);
  const auto &sv = svd.singularValues();
  DenseBeResult out;
  out.condition = sv[sv.size() - 1] > 0.0
                      ? sv[0] / sv[sv.size() - 1]
                      : std::numeric_limits<double>::infinity();
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) {
    throw Error("dense_be_reference: singular system, condition estimate " +
                std::to_string(out.condition));
  }
  const ParamVector z = lu.solve(b);
  out.state = state;
  out.state.x_c = z.head(d);
  for (std::size_t i = 0; i < n; ++i) {
    out.state.flows[i] = z.segment(block(i + 1), d);
  }
  out.state.t_now = tau + dt;
  return out;
}

ParamVector stack_difference(const FlowState &state, const FlowState &ref) {
  const Eigen::Index d = state.x_c.size();
  const std::size_t n = state.num_clients();
  if (ref.x_c.size() != d || ref.num_clients() != n) {
    throw DimensionError("stack_difference: shape mismatch");
  }
  ParamVector out(static_cast<Eigen::Index>(n + 1) * d);
  out.head(d) = state.x_c - ref.x_c;
  for (std::size_t i = 0; i < n; ++i) {
    out.segment(static_cast<Eigen::Index>(i + 1) * d, d) =
        state.flows[i] - ref.flows[i];
  }
  return out;
}

namespace {

ParamVector interpolate(const Series &s, double t) {
  if (t <= s.t.front()) return s.x.front();
  if (t >= s.t.back()) return s.x.back();
  const auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - s.t.begin());
  const double w = (t - s.t[hi - 1]) / (s.t[hi] - s.t[hi - 1]);
  return (1.0 - w) * s.x[hi - 1] + w * s.x[hi];
}

}  // namespace

double beta_norm(const Series &series, const BetaNormSpec &spec) {
  if (!(spec.beta > 0.0)) throw ConfigError("beta_norm: beta must be > 0");
  if (series.t.empty() || series.t.size() != series.x.size()) {
    throw Error("beta_norm: empty or ragged series");
  }
  const double t0 = series.t.front();
  std::vector<double> grid = spec.grid;
  if (grid.empty()) {
    for (double t : series.t) grid.push_back(t - t0);
  }
  if (grid.empty()) throw Error("beta_norm: empty grid");
  double out = 0.0;
  for (double tau : grid) {
    if (tau < 0.0 || (spec.horizon > 0.0 && tau > spec.horizon * (1 + 1e-12))) {
      throw Error("beta_norm: grid point outside [0, T]");
    }
    const ParamVector y = interpolate(series, t0 + tau);
    const double mag = y.size() > 0 ? y.cwiseAbs().maxCoeff() : 0.0;
    out = std::max(out, std::exp(-spec.beta * tau) * mag);
  }
  return out;
}

Series round_error_series(const std::vector<FlowState> &trajectory,
                          const FlowState &stationary) {
  Series s;
  for (const auto &st : trajectory) {
    if (!s.t.empty() && st.t_now <= s.t.back()) continue;
    s.t.push_back(st.t_now);
    s.x.push_back(stack_difference(st, stationary));
  }
  return s;
}

std::vector<double> contraction_ratio(
    const std::vector<std::vector<FlowState>> &rounds,
    const FlowState &stationary, double beta) {
  std::vector<double> norms;
  norms.reserve(rounds.size());
  for (const auto &traj : rounds) {
    const Series s = round_error_series(traj, stationary);
    BetaNormSpec spec;
    spec.beta = beta;
    spec.horizon = s.t.back() - s.t.front();
    norms.push_back(beta_norm(s, spec));
  }
  std::vector<double> ratios;
  for (std::size_t k = 0; k + 1 < norms.size(); ++k) {
    ratios.push_back(norms[k] > 0.0 ? norms[k + 1] / norms[k] : 0.0);
  }
  return ratios;
}

FlowState stationary_state(
    std::span<const QuadraticObjective *const> objectives,
    std::span<const double> weights) {
  const ParamVector x_star = quadratic_minimizer(objectives, weights);
  FlowState s = make_initial_state(x_star, objectives.size());
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    // Client rest point: p grad f + drain(I) = 0.
    s.flows[i] = -kClientFlowOrientation * weights[i] *
                 objectives[i]->gradient(x_star);
  }
  return s;
}

SeriesBound series_bound(std::span<const double> gammas,
                         std::span<const double> samples, double beta,
                         double dt) {
  if (!(beta > 0.0) || !(dt > 0.0)) {
    throw ConfigError("series_bound: beta and dt must be > 0");
  }
  if (gammas.size() < samples.size()) {
    throw DimensionError("series_bound: need a weight for every lag");
  }
  double m_bound = 0.0;
  for (double g : gammas) m_bound = std::max(m_bound, std::abs(g));
  double x_norm = 0.0;
  SeriesBound out;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    const double decay = std::exp(-beta * dt * static_cast<double>(m));
    x_norm = std::max(x_norm, decay * std::abs(samples[m]));
    double s = 0.0;
    for (std::size_t l = 0; l <= m; ++l) s += gammas[l] * samples[m - l];
    out.lhs = std::max(out.lhs, decay * std::abs(s));
  }
  out.rhs = m_bound / (1.0 - std::exp(-beta * dt)) * x_norm;
  return out;
}

namespace {

Matrix circuit_jacobian(double p_a, double inductance, double sign,
                        double orientation) {
  // State order (x_c, I, x_1).
  Matrix j = Matrix::Zero(3, 3);
  j(0, 1) = sign;
  j(1, 0) = 1.0 / inductance;
  j(1, 2) = -1.0 / inductance;
  j(2, 1) = -orientation;
  j(2, 2) = -p_a;
  return j;
}

}  // namespace

Eigen::VectorXcd circuit_eigenvalues(double p_a, double inductance,
                                     double sign, double orientation) {
  Eigen::EigenSolver<Matrix> es(
      circuit_jacobian(p_a, inductance, sign, orientation));
  return es.eigenvalues();
}

double be_spectral_radius(double p_a, double inductance, double dt,
                          double sign, double orientation) {
  const Matrix j = circuit_jacobian(p_a, inductance, sign, orientation);
  const Matrix step = (Matrix::Identity(3, 3) - dt * j).inverse();
  Eigen::EigenSolver<Matrix> es(step);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace fedecado::oracles
