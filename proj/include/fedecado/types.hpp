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

#ifndef FEDECADO_TYPES_HPP_
#define FEDECADO_TYPES_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fedecado {

// Flat model/state vector. Every x, x_c, x_i and flow variable uses it.
using ParamVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using ClientId = std::size_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A client trajectory left the finite range. `step` is the 1-based local step
// that produced the first non-finite entry.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string &what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Adaptive step control ran out of backtracks.
class StepControlError : public Error {
 public:
  StepControlError(const std::string &what, double dt, double eps)
      : Error(what), dt_(dt), eps_(eps) {}
  double dt() const noexcept { return dt_; }
  double eps() const noexcept { return eps_; }

 private:
  double dt_;
  double eps_;
};

inline bool all_finite(const ParamVector &v) { return v.allFinite(); }

inline void require_dim(const ParamVector &v, Eigen::Index d,
                        const char *what) {
  if (v.size() != d) {
    throw DimensionError(std::string(what) + ": expected length " +
                         std::to_string(d) + ", got " +
                         std::to_string(v.size()));
  }
}

}  // namespace fedecado

#endif  // FEDECADO_TYPES_HPP_
