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

#include "fedecado/objective.hpp"

#include <cmath>
#include <string>

namespace fedecado {

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Softmax in place; returns log-sum-exp of the input.
double softmax_inplace(Eigen::VectorXd &z) {
  const double zmax = z.maxCoeff();
  z = (z.array() - zmax).exp();
  const double sum = z.sum();
  z /= sum;
  return zmax + std::log(sum);
}

void check_data(const std::shared_ptr<const Dataset> &data,
                const std::vector<std::size_t> &indices, const char *what) {
  if (!data) throw ConfigError(std::string(what) + ": null dataset");
  if (indices.empty()) {
    throw ConfigError(std::string(what) + ": empty local dataset");
  }
  for (auto idx : indices) {
    if (idx >= data->size()) {
      throw ConfigError(std::string(what) + ": sample index out of range");
    }
  }
  if (data->num_classes < 2) {
    throw ConfigError(std::string(what) + ": need at least two classes");
  }
}

std::vector<std::size_t> draw_batch(std::size_t pool, std::size_t batch,
                                    std::mt19937_64 &rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
  std::vector<std::size_t> out(batch);
  for (auto &b : out) b = pick(rng);
  return out;
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kQuadratic:
      return "quadratic";
    case ObjectiveKind::kLogistic:
      return "logistic";
    case ObjectiveKind::kMlp:
      return "mlp";
  }
  return "unknown";
}

ObjectiveKind objective_kind_from_string(std::string_view name) {
  if (name == "quadratic") return ObjectiveKind::kQuadratic;
  if (name == "logistic") return ObjectiveKind::kLogistic;
  if (name == "mlp") return ObjectiveKind::kMlp;
  throw ConfigError("unknown objective kind '" + std::string(name) + "'");
}

ParamVector LocalObjective::minibatch_gradient(const ParamVector &x,
                                               std::size_t,
                                               std::mt19937_64 &) const {
  return gradient(x);
}

ParamVector LocalObjective::initial_point(std::uint64_t) const {
  return ParamVector::Zero(dim());
}

// ---------------------------------------------------------------- quadratic

QuadraticObjective::QuadraticObjective(Matrix a, ParamVector center)
    : a_(std::move(a)), center_(std::move(center)) {
  if (a_.rows() != a_.cols() || a_.rows() != center_.size()) {
    throw DimensionError("quadratic: A must be d x d with d = len(center)");
  }
  const double scale = std::max(1.0, a_.cwiseAbs().maxCoeff());
  if ((a_ - a_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ConfigError("quadratic: A must be symmetric");
  }
  if (a_.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a_, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
      throw ConfigError("quadratic: A must be positive semidefinite");
    }
  }
}

double QuadraticObjective::loss(const ParamVector &x) const {
  const ParamVector r = x - center_;
  return 0.5 * r.dot(a_ * r);
}

ParamVector QuadraticObjective::gradient(const ParamVector &x) const {
  return a_ * (x - center_);
}

ParamVector QuadraticObjective::mean_hessian(const ParamVector &,
                                             std::size_t) const {
  return a_.diagonal();
}

std::shared_ptr<QuadraticObjective> make_random_quadratic(
    Eigen::Index dim, double eig_min, double condition, double center_scale,
    std::mt19937_64 &rng) {
  if (dim < 1 || !(eig_min > 0.0) || !(condition >= 1.0)) {
    throw ConfigError("random quadratic: need dim >= 1, eig_min > 0, "
                      "condition >= 1");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix g(dim, dim);
  for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();

  ParamVector eig(dim);
  const double log_span = std::log(condition);
  for (Eigen::Index k = 0; k < dim; ++k) {
    eig[k] = eig_min * std::exp(log_span * unit(rng));
  }
  // Pin the extremes so the condition number is exactly `condition`.
  eig[0] = eig_min;
  if (dim > 1) eig[dim - 1] = eig_min * condition;

  Matrix a = q * eig.asDiagonal() * q.transpose();
  a = 0.5 * (a + a.transpose()).eval();

  ParamVector c(dim);
  for (Eigen::Index k = 0; k < dim; ++k) c[k] = center_scale * normal(rng);
  return std::make_shared<QuadraticObjective>(std::move(a), std::move(c));
}

// ----------------------------------------------------------------- softmax

SoftmaxRegression::SoftmaxRegression(std::shared_ptr<const Dataset> data,
                                     std::vector<std::size_t> indices)
    : data_(std::move(data)), indices_(std::move(indices)) {
  check_data(data_, indices_, "logistic");
  classes_ = data_->num_classes;
  features_ = data_->feature_dim();
}

Eigen::Index SoftmaxRegression::dim() const {
  return classes_ * features_ + classes_;
}

void SoftmaxRegression::accumulate(const ParamVector &x, std::size_t sample,
                                   ParamVector &grad) const {
  const RowMajorMap w(x.data(), classes_, features_);
  const auto b = x.segment(classes_ * features_, classes_);
  const auto f = data_->features.row(static_cast<Eigen::Index>(sample));
  Eigen::VectorXd z = w * f.transpose() + b;
  softmax_inplace(z);
  z[data_->labels[sample]] -= 1.0;
  RowMajorMutMap gw(grad.data(), classes_, features_);
  gw.noalias() += z * f;
  grad.segment(classes_ * features_, classes_) += z;
}

double SoftmaxRegression::loss(const ParamVector &x) const {
  const RowMajorMap w(x.data(), classes_, features_);
  const auto b = x.segment(classes_ * features_, classes_);
  double total = 0.0;
  for (auto s : indices_) {
    const auto f = data_->features.row(static_cast<Eigen::Index>(s));
    Eigen::VectorXd z = w * f.transpose() + b;
    const double zy = z[data_->labels[s]];
    total += softmax_inplace(z) - zy;
  }
  return total;
}

ParamVector SoftmaxRegression::gradient(const ParamVector &x) const {
  ParamVector grad = ParamVector::Zero(dim());
  for (auto s : indices_) accumulate(x, s, grad);
  return grad;
}

ParamVector SoftmaxRegression::minibatch_gradient(const ParamVector &x,
                                                  std::size_t batch,
                                                  std::mt19937_64 &rng) const {
  if (batch == 0 || batch >= indices_.size()) return gradient(x);
  ParamVector grad = ParamVector::Zero(dim());
  for (auto k : draw_batch(indices_.size(), batch, rng)) {
    accumulate(x, indices_[k], grad);
  }
  return grad * (static_cast<double>(indices_.size()) /
                 static_cast<double>(batch));
}

ParamVector SoftmaxRegression::mean_hessian(const ParamVector &x,
                                            std::size_t sample_budget) const {
  if (sample_budget == 0) throw ConfigError("mean_hessian: budget must be >= 1");
  const RowMajorMap w(x.data(), classes_, features_);
  const auto b = x.segment(classes_ * features_, classes_);
  const std::size_t count = std::min(sample_budget, indices_.size());
  ParamVector h = ParamVector::Zero(dim());
  RowMajorMutMap hw(h.data(), classes_, features_);
  for (std::size_t k = 0; k < count; ++k) {
    const auto s = indices_[k];
    const auto f = data_->features.row(static_cast<Eigen::Index>(s));
    Eigen::VectorXd z = w * f.transpose() + b;
    softmax_inplace(z);
    const Eigen::VectorXd curv = z.array() * (1.0 - z.array());
    hw.noalias() += curv * f.array().square().matrix();
    h.segment(classes_ * features_, classes_) += curv;
  }
  return h / static_cast<double>(count);
}

std::size_t SoftmaxRegression::num_correct(const ParamVector &x) const {
  const RowMajorMap w(x.data(), classes_, features_);
  const auto b = x.segment(classes_ * features_, classes_);
  std::size_t correct = 0;
  for (auto s : indices_) {
    const auto f = data_->features.row(static_cast<Eigen::Index>(s));
    const Eigen::VectorXd z = w * f.transpose() + b;
    Eigen::Index arg = 0;
    z.maxCoeff(&arg);
    correct += (arg == data_->labels[s]);
  }
  return correct;
}

// --------------------------------------------------------------------- mlp

TinyMlp::TinyMlp(std::shared_ptr<const Dataset> data,
                 std::vector<std::size_t> indices, Eigen::Index hidden)
    : data_(std::move(data)), indices_(std::move(indices)), hidden_(hidden) {
  check_data(data_, indices_, "mlp");
  if (hidden_ < 1) throw ConfigError("mlp: hidden width must be >= 1");
  classes_ = data_->num_classes;
  features_ = data_->feature_dim();
}

Eigen::Index TinyMlp::dim() const {
  return hidden_ * features_ + hidden_ + classes_ * hidden_ + classes_;
}

double TinyMlp::accumulate(const ParamVector &x, std::size_t sample,
                           ParamVector *grad) const {
  const Eigen::Index off_b1 = hidden_ * features_;
  const Eigen::Index off_w2 = off_b1 + hidden_;
  const Eigen::Index off_b2 = off_w2 + classes_ * hidden_;
  const RowMajorMap w1(x.data(), hidden_, features_);
  const RowMajorMap w2(x.data() + off_w2, classes_, hidden_);
  const auto f = data_->features.row(static_cast<Eigen::Index>(sample));
  const int label = data_->labels[sample];

  const Eigen::VectorXd act =
      (w1 * f.transpose() + x.segment(off_b1, hidden_)).array().tanh();
  Eigen::VectorXd z = w2 * act + x.segment(off_b2, classes_);
  const double zy = z[label];
  const double loss = softmax_inplace(z) - zy;
  if (grad == nullptr) return loss;

  z[label] -= 1.0;
  RowMajorMutMap gw2(grad->data() + off_w2, classes_, hidden_);
  gw2.noalias() += z * act.transpose();
  grad->segment(off_b2, classes_) += z;
  const Eigen::VectorXd da =
      (w2.transpose() * z).array() * (1.0 - act.array().square());
  RowMajorMutMap gw1(grad->data(), hidden_, features_);
  gw1.noalias() += da * f;
  grad->segment(off_b1, hidden_) += da;
  return loss;
}

double TinyMlp::loss(const ParamVector &x) const {
  double total = 0.0;
  for (auto s : indices_) total += accumulate(x, s, nullptr);
  return total;
}

ParamVector TinyMlp::gradient(const ParamVector &x) const {
  ParamVector grad = ParamVector::Zero(dim());
  for (auto s : indices_) accumulate(x, s, &grad);
  return grad;
}

ParamVector TinyMlp::minibatch_gradient(const ParamVector &x,
                                        std::size_t batch,
                                        std::mt19937_64 &rng) const {
  if (batch == 0 || batch >= indices_.size()) return gradient(x);
  ParamVector grad = ParamVector::Zero(dim());
  for (auto k : draw_batch(indices_.size(), batch, rng)) {
    accumulate(x, indices_[k], &grad);
  }
  return grad * (static_cast<double>(indices_.size()) /
                 static_cast<double>(batch));
}

ParamVector TinyMlp::mean_hessian(const ParamVector &x,
                                  std::size_t sample_budget) const {
  if (sample_budget == 0) throw ConfigError("mean_hessian: budget must be >= 1");
  const Eigen::Index off_b1 = hidden_ * features_;
  const Eigen::Index off_w2 = off_b1 + hidden_;
  const Eigen::Index off_b2 = off_w2 + classes_ * hidden_;
  const RowMajorMap w1(x.data(), hidden_, features_);
  const RowMajorMap w2(x.data() + off_w2, classes_, hidden_);

  const std::size_t count = std::min(sample_budget, indices_.size());
  ParamVector h = ParamVector::Zero(dim());
  RowMajorMutMap hw1(h.data(), hidden_, features_);
  RowMajorMutMap hw2(h.data() + off_w2, classes_, hidden_);
  for (std::size_t k = 0; k < count; ++k) {
    const auto s = indices_[k];
    const auto f = data_->features.row(static_cast<Eigen::Index>(s));
    const Eigen::VectorXd act =
        (w1 * f.transpose() + x.segment(off_b1, hidden_)).array().tanh();
    Eigen::VectorXd z = w2 * act + x.segment(off_b2, classes_);
    softmax_inplace(z);
    const Eigen::VectorXd curv = z.array() * (1.0 - z.array());
    hw2.noalias() += curv * act.array().square().matrix().transpose();
    h.segment(off_b2, classes_) += curv;

    // Output-curvature seen through each hidden unit: w^T (diag(s) - s s^T) w.
    for (Eigen::Index j = 0; j < hidden_; ++j) {
      const auto col = w2.col(j);
      const double mean = z.dot(col);
      const double q =
          std::max(0.0, (z.array() * col.array().square()).sum() - mean * mean);
      const double damp = 1.0 - act[j] * act[j];
      const double scale = damp * damp * q;
      hw1.row(j) += scale * f.array().square().matrix();
      h[off_b1 + j] += scale;
    }
  }
  return h / static_cast<double>(count);
}

std::size_t TinyMlp::num_correct(const ParamVector &x) const {
  const Eigen::Index off_b1 = hidden_ * features_;
  const Eigen::Index off_w2 = off_b1 + hidden_;
  const Eigen::Index off_b2 = off_w2 + classes_ * hidden_;
  const RowMajorMap w1(x.data(), hidden_, features_);
  const RowMajorMap w2(x.data() + off_w2, classes_, hidden_);
  std::size_t correct = 0;
  for (auto s : indices_) {
    const auto f = data_->features.row(static_cast<Eigen::Index>(s));
    const Eigen::VectorXd act =
        (w1 * f.transpose() + x.segment(off_b1, hidden_)).array().tanh();
    const Eigen::VectorXd z = w2 * act + x.segment(off_b2, classes_);
    Eigen::Index arg = 0;
    z.maxCoeff(&arg);
    correct += (arg == data_->labels[s]);
  }
  return correct;
}

ParamVector TinyMlp::initial_point(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector x = ParamVector::Zero(dim());
  const double s1 = std::sqrt(2.0 / static_cast<double>(features_));
  const double s2 = std::sqrt(2.0 / static_cast<double>(hidden_));
  const Eigen::Index off_w2 = hidden_ * features_ + hidden_;
  for (Eigen::Index k = 0; k < hidden_ * features_; ++k) x[k] = s1 * normal(rng);
  for (Eigen::Index k = 0; k < classes_ * hidden_; ++k) {
    x[off_w2 + k] = s2 * normal(rng);
  }
  return x;
}

// ------------------------------------------------------------ entry points

double evaluate_loss(const LocalObjective &obj, const ParamVector &x) {
  require_dim(x, obj.dim(), "evaluate_loss");
  return obj.loss(x);
}

ParamVector gradient(const LocalObjective &obj, const ParamVector &x) {
  require_dim(x, obj.dim(), "gradient");
  return obj.gradient(x);
}

ParamVector mean_hessian(const LocalObjective &obj, const ParamVector &x,
                         std::size_t sample_budget) {
  require_dim(x, obj.dim(), "mean_hessian");
  if (sample_budget == 0) throw ConfigError("mean_hessian: budget must be >= 1");
  return obj.mean_hessian(x, sample_budget);
}

}  // namespace fedecado
