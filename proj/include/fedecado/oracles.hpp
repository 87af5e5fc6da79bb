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

#ifndef FEDECADO_ORACLES_HPP_
#define FEDECADO_ORACLES_HPP_

#include <span>
#include <vector>

#include "fedecado/consensus.hpp"
#include "fedecado/objective.hpp"

namespace fedecado::oracles {

// x* solving (sum p_i A_i) x = sum p_i A_i c_i by a dense LU solve. A
// 1e-12 ridge is added when the weighted matrix is singular.
ParamVector quadratic_minimizer(
    std::span<const QuadraticObjective *const> objectives,
    std::span<const double> weights);

// Central differences, one coordinate at a time.
ParamVector finite_diff_gradient(const LocalObjective &obj,
                                 const ParamVector &x, double h = 1e-6);

// Second central differences of the loss, divided by num_samples() so the
// result is comparable with mean_hessian().
ParamVector finite_diff_hessian_diag(const LocalObjective &obj,
                                     const ParamVector &x, double h = 1e-4);

double relative_error(const ParamVector &approx, const ParamVector &exact);

struct DenseBeResult {
  FlowState state;
  double condition = 0.0;  // 2-norm condition number of the system matrix
};

// Assembles the full (n+1) d square Backward-Euler system, unknowns ordered
// [x_c, I_1, ..., I_n], and solves it densely. Only for desk-scale inputs.
DenseBeResult dense_be_reference(const FlowState &state,
                                 const RoundContext &ctx,
                                 const SensitivityModel &sens, double tau,
                                 double dt, double inductance);

// Flat [x_c, I_1, ..., I_n] minus the same stack of a reference state.
ParamVector stack_difference(const FlowState &state, const FlowState &ref);

struct BetaNormSpec {
  double beta = 1.0;
  double horizon = 0.0;
  // Sample times relative to the series start; empty means "use the series
  // nodes".
  std::vector<double> grid;
};

// Time-stamped samples of a vector-valued series, read by piecewise-linear
// interpolation.
struct Series {
  std::vector<double> t;
  std::vector<ParamVector> x;
};

// max over the grid of exp(-beta tau) * max_j |y_j(tau)|, with tau relative
// to the first sample.
double beta_norm(const Series &series, const BetaNormSpec &spec);

// Distance trajectory of one consensus round to the stationary state.
Series round_error_series(const std::vector<FlowState> &trajectory,
                          const FlowState &stationary);

// ratio_k = ||X^{k+1} - X*||_beta / ||X^k - X*||_beta, one entry per
// consecutive round pair; a zero denominator yields 0.
std::vector<double> contraction_ratio(
    const std::vector<std::vector<FlowState>> &rounds,
    const FlowState &stationary, double beta = 1.0);

// Stationary central state of the weighted quadratic problem: x_c = x* and
// the flow each client needs to sit at x*, I_i = p_i grad f_i(x*).
FlowState stationary_state(
    std::span<const QuadraticObjective *const> objectives,
    std::span<const double> weights);

struct SeriesBound {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds() const { return lhs <= rhs; }
};

// Discrete beta-norm bound for a convolution S_m = sum_l gamma_l X_{m-l} on
// a uniform grid of spacing dt:
//   max_m e^{-beta m dt} |S_m|  <=  M / (1 - e^{-beta dt}) ||X||_beta,
// with M = max |gamma_l|.
SeriesBound series_bound(std::span<const double> gammas,
                         std::span<const double> samples, double beta,
                         double dt);

// Eigenvalues of the continuous one-client circuit
//   x_c' = s I,  L I' = x_c - x_1,  x_1' = -(p a x_1 + o I)
// for the frozen sign s and client orientation o.
Eigen::VectorXcd circuit_eigenvalues(double p_a, double inductance,
                                     double sign = kCentralCouplingSign,
                                     double orientation =
                                         kClientFlowOrientation);

// Spectral radius of the Backward-Euler map (I - dt J)^{-1} of that circuit.
double be_spectral_radius(double p_a, double inductance, double dt,
                          double sign = kCentralCouplingSign,
                          double orientation = kClientFlowOrientation);

}  // namespace fedecado::oracles

#endif  // FEDECADO_ORACLES_HPP_
