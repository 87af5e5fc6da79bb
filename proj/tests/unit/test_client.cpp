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

#include "doctest.h"

#include "fedecado/client.hpp"
#include "fedecado/objective.hpp"

using namespace fedecado;

namespace {

ParamVector vec(std::initializer_list<double> v) {
  ParamVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

ClientConfig config(double lr, int epochs, double weight = 1.0) {
  ClientConfig c;
  c.lr = lr;
  c.epochs = epochs;
  c.weight = weight;
  return c;
}

}  // namespace

TEST_SUITE("client-runtime") {

TEST_CASE("single gradient step on the unit quadratic") {
  const QuadraticObjective q(Matrix::Identity(2, 2), vec({0, 0}));
  const auto up = simulate_local(q, config(0.1, 1), vec({1, 0}), vec({0, 0}));
  CHECK(up.final_state()[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(up.final_state()[1] == 0.0);
}

TEST_CASE("zero gradient leaves only the flow drift") {
  const QuadraticObjective q(Matrix::Zero(3, 3), vec({1, 2, 3}));
  const ParamVector flow = vec({0.5, 0.5, 0.5});
  const auto up = simulate_local(q, config(0.1, 3), vec({1, 2, 3}), flow);
  const ParamVector expected = vec({1, 2, 3}) - 0.3 * flow;
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(up.final_state()[j] == doctest::Approx(expected[j]).epsilon(1e-14));
  }
}

TEST_CASE("window length is epochs times lr") {
  const QuadraticObjective q(Matrix::Identity(1, 1), vec({0}));
  const auto up = simulate_local(q, config(1e-3, 3), vec({1}), vec({0}));
  CHECK(up.window == doctest::Approx(3e-3).epsilon(1e-12));
  CHECK(up.end_time() - up.start_time() == doctest::Approx(3e-3).epsilon(1e-12));
  CHECK(up.checkpoints.size() == 4);
  for (std::size_t j = 1; j < up.checkpoints.size(); ++j) {
    CHECK(up.checkpoints[j].t > up.checkpoints[j - 1].t);
  }
}

TEST_CASE("start time shifts the checkpoint grid") {
  const QuadraticObjective q(Matrix::Identity(1, 1), vec({0}));
  const auto up = simulate_local(q, config(0.01, 2), vec({1}), vec({0}), 5.0);
  CHECK(up.start_time() == 5.0);
  CHECK(up.end_time() == doctest::Approx(5.02).epsilon(1e-14));
}

TEST_CASE("with zero flow and unit weight it is plain gradient descent") {
  std::mt19937_64 rng(2);
  const auto q = make_random_quadratic(6, 1.0, 10.0, 1.0, rng);
  const ParamVector x0 = ParamVector::Constant(6, 0.3);
  const auto up = simulate_local(*q, config(0.01, 7), x0, ParamVector::Zero(6));
  ParamVector x = x0;
  for (int k = 0; k < 7; ++k) {
    x = x - 0.01 * (1.0 * q->gradient(x) + ParamVector::Zero(6));
    CHECK(up.checkpoints[k + 1].x == x);
  }
}

TEST_CASE("loss is non-increasing for stable step sizes") {
  std::mt19937_64 rng(6);
  const auto q = make_random_quadratic(8, 1.0, 20.0, 1.0, rng);
  // lr below 2 / lambda_max
  const auto up =
      simulate_local(*q, config(0.05, 30), ParamVector::Zero(8), ParamVector::Zero(8));
  for (std::size_t j = 1; j < up.checkpoints.size(); ++j) {
    CHECK(q->loss(up.checkpoints[j].x) <= q->loss(up.checkpoints[j - 1].x) + 1e-15);
  }
}

TEST_CASE("divergence reports the offending step") {
  const QuadraticObjective q(Matrix::Identity(1, 1), vec({0}));
  try {
    simulate_local(q, config(1e300, 5), vec({1}), vec({0}));
    FAIL("expected a DivergenceError");
  } catch (const DivergenceError &e) {
    CHECK(e.step() == 2);
  }
}

TEST_CASE("invalid client configs are rejected") {
  const QuadraticObjective q(Matrix::Identity(1, 1), vec({0}));
  CHECK_THROWS_AS(simulate_local(q, config(0.0, 1), vec({1}), vec({0})), ConfigError);
  CHECK_THROWS_AS(simulate_local(q, config(0.1, 0), vec({1}), vec({0})), ConfigError);
  CHECK_THROWS_AS(simulate_local(q, config(0.1, 1), vec({1, 2}), vec({0})), DimensionError);
}

TEST_CASE("minibatch mode is reproducible for a fixed seed") {
  BlobSpec spec;
  spec.samples = 64;
  spec.classes = 3;
  spec.seed = 1;
  auto data = std::make_shared<const Dataset>(make_blobs(spec));
  std::vector<std::size_t> idx(data->size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const SoftmaxRegression obj(data, idx);
  LocalSolverOptions opts;
  opts.minibatch = 8;
  opts.seed = 42;
  const ParamVector x0 = ParamVector::Zero(obj.dim());
  const auto a = simulate_local(obj, config(0.01, 5), x0, x0, 0.0, opts);
  const auto b = simulate_local(obj, config(0.01, 5), x0, x0, 0.0, opts);
  CHECK(a.final_state() == b.final_state());
  const auto full = simulate_local(obj, config(0.01, 5), x0, x0);
  CHECK(a.final_state() != full.final_state());
}

TEST_CASE("endpoint-only mode keeps two checkpoints") {
  const QuadraticObjective q(Matrix::Identity(1, 1), vec({0}));
  LocalSolverOptions opts;
  opts.endpoint_only = true;
  const auto up = simulate_local(q, config(0.1, 4), vec({1}), vec({0}), 0.0, opts);
  CHECK(up.checkpoints.size() == 2);
  CHECK(up.final_state()[0] == doctest::Approx(std::pow(0.9, 4)).epsilon(1e-14));
}

TEST_CASE("sampled heterogeneity stays in range and is seeded") {
  const auto a = sample_heterogeneity(500, 13);
  const auto b = sample_heterogeneity(500, 13);
  bool saw_one = false, saw_ten = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].lr >= 1e-4);
    CHECK(a[i].lr <= 1e-3);
    CHECK(a[i].epochs >= 1);
    CHECK(a[i].epochs <= 10);
    CHECK(a[i].id == i);
    CHECK(a[i].lr == b[i].lr);
    CHECK(a[i].epochs == b[i].epochs);
    saw_one = saw_one || a[i].epochs == 1;
    saw_ten = saw_ten || a[i].epochs == 10;
  }
  CHECK(saw_one);
  CHECK(saw_ten);
}

TEST_CASE("client update json round trip") {
  const QuadraticObjective q(Matrix::Identity(2, 2), vec({0, 0}));
  auto up = simulate_local(q, config(0.1, 3), vec({1, -1}), vec({0.2, 0}));
  up.id = 4;
  const auto j = update_to_json(up);
  CHECK(j.at("id") == 4);
  CHECK(j.contains("T"));
  CHECK(j.at("checkpoints").size() == 4);
  const auto back = update_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.id == 4);
  CHECK(back.window == up.window);
  REQUIRE(back.checkpoints.size() == up.checkpoints.size());
  for (std::size_t k = 0; k < up.checkpoints.size(); ++k) {
    CHECK(back.checkpoints[k].t == up.checkpoints[k].t);
    CHECK(back.checkpoints[k].x == up.checkpoints[k].x);
  }
}

}  // TEST_SUITE
