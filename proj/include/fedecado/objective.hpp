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

#ifndef FEDECADO_OBJECTIVE_HPP_
#define FEDECADO_OBJECTIVE_HPP_

#include <cstdint>
#include <memory>
#include <random>
#include <string_view>
#include <vector>

#include "fedecado/dataset.hpp"
#include "fedecado/types.hpp"

namespace fedecado {

enum class ObjectiveKind { kQuadratic, kLogistic, kMlp };

std::string_view to_string(ObjectiveKind kind);
ObjectiveKind objective_kind_from_string(std::string_view name);

// Local empirical risk f_i. Losses are sums over the client's samples.
// Implementations are immutable after construction and safe to share across
// threads.
class LocalObjective {
 public:
  virtual ~LocalObjective() = default;

  virtual ObjectiveKind kind() const = 0;
  virtual Eigen::Index dim() const = 0;

  virtual double loss(const ParamVector &x) const = 0;
  virtual ParamVector gradient(const ParamVector &x) const = 0;

  // Unbiased estimate of gradient() from `batch` samples drawn with
  // replacement. Objectives without data return the exact gradient.
  virtual ParamVector minibatch_gradient(const ParamVector &x,
                                         std::size_t batch,
                                         std::mt19937_64 &rng) const;

  // Diagonal of the per-sample mean Hessian (Gauss-Newton for data-backed
  // kinds) over the first min(sample_budget, num_samples()) samples.
  virtual ParamVector mean_hessian(const ParamVector &x,
                                   std::size_t sample_budget) const = 0;

  virtual std::size_t num_samples() const { return 0; }

  // Correctly classified samples at x; zero for non-classification kinds.
  virtual std::size_t num_correct(const ParamVector &) const { return 0; }

  // Starting point for training: zeros unless the model needs symmetry
  // breaking.
  virtual ParamVector initial_point(std::uint64_t seed) const;
};

using ObjectivePtr = std::shared_ptr<const LocalObjective>;

// f(x) = 1/2 (x - c)^T A (x - c), A symmetric PSD.
class QuadraticObjective final : public LocalObjective {
 public:
  QuadraticObjective(Matrix a, ParamVector center);

  ObjectiveKind kind() const override { return ObjectiveKind::kQuadratic; }
  Eigen::Index dim() const override { return center_.size(); }
  double loss(const ParamVector &x) const override;
  ParamVector gradient(const ParamVector &x) const override;
  ParamVector mean_hessian(const ParamVector &x,
                           std::size_t sample_budget) const override;

  const Matrix &a() const { return a_; }
  const ParamVector &center() const { return center_; }

 private:
  Matrix a_;
  ParamVector center_;
};

// Multinomial logistic regression. Parameter layout: weights W (K x m,
// row-major) followed by biases b (K).
class SoftmaxRegression final : public LocalObjective {
 public:
  SoftmaxRegression(std::shared_ptr<const Dataset> data,
                    std::vector<std::size_t> indices);

  ObjectiveKind kind() const override { return ObjectiveKind::kLogistic; }
  Eigen::Index dim() const override;
  double loss(const ParamVector &x) const override;
  ParamVector gradient(const ParamVector &x) const override;
  ParamVector minibatch_gradient(const ParamVector &x, std::size_t batch,
                                 std::mt19937_64 &rng) const override;
  ParamVector mean_hessian(const ParamVector &x,
                           std::size_t sample_budget) const override;
  std::size_t num_samples() const override { return indices_.size(); }
  std::size_t num_correct(const ParamVector &x) const override;

 private:
  void accumulate(const ParamVector &x, std::size_t sample,
                  ParamVector &grad) const;

  std::shared_ptr<const Dataset> data_;
  std::vector<std::size_t> indices_;
  int classes_;
  Eigen::Index features_;
};

// One tanh hidden layer followed by a softmax output. Parameter layout:
// W1 (h x m, row-major), b1 (h), W2 (K x h, row-major), b2 (K).
class TinyMlp final : public LocalObjective {
 public:
  TinyMlp(std::shared_ptr<const Dataset> data,
          std::vector<std::size_t> indices, Eigen::Index hidden);

  ObjectiveKind kind() const override { return ObjectiveKind::kMlp; }
  Eigen::Index dim() const override;
  double loss(const ParamVector &x) const override;
  ParamVector gradient(const ParamVector &x) const override;
  ParamVector minibatch_gradient(const ParamVector &x, std::size_t batch,
                                 std::mt19937_64 &rng) const override;
  ParamVector mean_hessian(const ParamVector &x,
                           std::size_t sample_budget) const override;
  std::size_t num_samples() const override { return indices_.size(); }
  std::size_t num_correct(const ParamVector &x) const override;
  ParamVector initial_point(std::uint64_t seed) const override;

  Eigen::Index hidden() const { return hidden_; }

 private:
  double accumulate(const ParamVector &x, std::size_t sample,
                    ParamVector *grad) const;

  std::shared_ptr<const Dataset> data_;
  std::vector<std::size_t> indices_;
  int classes_;
  Eigen::Index features_;
  Eigen::Index hidden_;
};

// Dimension-checked entry points.
double evaluate_loss(const LocalObjective &obj, const ParamVector &x);
ParamVector gradient(const LocalObjective &obj, const ParamVector &x);
ParamVector mean_hessian(const LocalObjective &obj, const ParamVector &x,
                         std::size_t sample_budget);

// Random quadratic with eigenvalues log-uniform on
// [eig_min, eig_min * condition] in a random orthonormal basis, and a center
// drawn from N(0, center_scale^2 I).
std::shared_ptr<QuadraticObjective> make_random_quadratic(
    Eigen::Index dim, double eig_min, double condition, double center_scale,
    std::mt19937_64 &rng);

}  // namespace fedecado

#endif  // FEDECADO_OBJECTIVE_HPP_
