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

#ifndef FEDECADO_VERIFY_HPP_
#define FEDECADO_VERIFY_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fedecado::verify {

struct CheckResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

// Gamma additivity and homogeneity on random trajectories sharing times.
CheckResult gamma_linearity(std::uint64_t seed, int cases = 200);
// Strict ordering of ordered checkpoint pairs at interior tau points, and
// exact preservation of constant trajectories.
CheckResult gamma_monotonicity(std::uint64_t seed, int cases = 200,
                               int points = 20);
// Schur-complement be_step against the dense assembled solve.
CheckResult solver_equivalence(std::uint64_t seed, int cases = 100);
// Analytic against central-difference gradients for every objective kind.
CheckResult gradient_fidelity(std::uint64_t seed, int points = 10);
// Gauss-Newton diagonal against second differences (logistic) and
// nonnegativity (mlp).
CheckResult hessian_diagonal(std::uint64_t seed);
// The frozen coupling sign gives a stable circuit and a contractive BE map;
// the flipped sign does not.
CheckResult sign_stability();
// Discrete beta-norm convolution bound on constructed series.
CheckResult series_bound(std::uint64_t seed, int cases = 100);
// Disjointness, coverage and weight sums of Dirichlet partitions.
CheckResult partition_invariants(std::uint64_t seed);
// Residual of the dense quadratic minimizer.
CheckResult minimizer_residual(std::uint64_t seed);
// Consensus and stationary states are preserved by be_step and whole rounds.
CheckResult fixed_point(std::uint64_t seed);
// Small quadratic run: convergence to x*, LTE bound on every accepted step,
// and beta-norm contraction after the first rounds.
CheckResult small_quadratic_run(std::uint64_t seed);

std::vector<CheckResult> run_suite(std::uint64_t seed = 20260101);

// TAP13 report; returns the number of failed checks.
int write_tap(std::ostream &os, const std::vector<CheckResult> &results);

}  // namespace fedecado::verify

#endif  // FEDECADO_VERIFY_HPP_
