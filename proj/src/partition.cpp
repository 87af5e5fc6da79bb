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

#include "fedecado/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fedecado {

std::size_t Partition::num_samples() const {
  std::size_t total = 0;
  for (const auto &c : clients) total += c.size();
  return total;
}

namespace {

std::vector<double> sample_dirichlet(std::size_t k, double alpha,
                                     std::mt19937_64 &rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> draw(k);
  double sum = 0.0;
  for (auto &v : draw) {
    v = gamma(rng);
    sum += v;
  }
  // Tiny alpha can underflow every draw.
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::fill(draw.begin(), draw.end(), 0.0);
    draw[pick(rng)] = 1.0;
    return draw;
  }
  for (auto &v : draw) v /= sum;
  return draw;
}

void finalize_weights(Partition &p) {
  const double total = static_cast<double>(p.num_samples());
  p.weights.resize(p.clients.size());
  for (std::size_t i = 0; i < p.clients.size(); ++i) {
    std::sort(p.clients[i].begin(), p.clients[i].end());
    p.weights[i] = static_cast<double>(p.clients[i].size()) / total;
  }
}

}  // namespace

Partition partition_dirichlet(const Dataset &dataset, std::size_t n_clients,
                              double alpha, std::uint64_t seed) {
  if (n_clients == 0) throw ConfigError("partition: n_clients must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("partition: alpha must be > 0");
  if (dataset.size() < n_clients) {
    throw ConfigError("partition: dataset has " +
                      std::to_string(dataset.size()) + " samples for " +
                      std::to_string(n_clients) + " clients");
  }
  std::mt19937_64 rng(seed);

  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(std::max(dataset.num_classes, 1)));
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    by_class.at(static_cast<std::size_t>(dataset.labels[s])).push_back(s);
  }

  Partition out;
  out.clients.resize(n_clients);
  for (auto &members : by_class) {
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);
    const auto props = sample_dirichlet(n_clients, alpha, rng);
    // Cumulative cut points; the last client absorbs rounding.
    double cum = 0.0;
    std::size_t begin = 0;
    for (std::size_t i = 0; i < n_clients; ++i) {
      cum += props[i];
      std::size_t end =
          (i + 1 == n_clients)
              ? members.size()
              : std::min(members.size(),
                         static_cast<std::size_t>(std::llround(
                             cum * static_cast<double>(members.size()))));
      end = std::max(end, begin);
      out.clients[i].insert(out.clients[i].end(), members.begin() + begin,
                            members.begin() + end);
      begin = end;
    }
  }

  // Repair: move one sample from the largest client into each empty one.
  for (std::size_t i = 0; i < n_clients; ++i) {
    while (out.clients[i].empty()) {
      auto largest = std::max_element(
          out.clients.begin(), out.clients.end(),
          [](const auto &a, const auto &b) { return a.size() < b.size(); });
      out.clients[i].push_back(largest->back());
      largest->pop_back();
    }
  }
  finalize_weights(out);
  return out;
}

Partition partition_iid(const Dataset &dataset, std::size_t n_clients,
                        std::uint64_t seed) {
  if (n_clients == 0) throw ConfigError("partition: n_clients must be >= 1");
  if (dataset.size() < n_clients) {
    throw ConfigError("partition: dataset smaller than n_clients");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  Partition out;
  out.clients.resize(n_clients);
  const std::size_t base = order.size() / n_clients;
  const std::size_t extra = order.size() % n_clients;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n_clients; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    out.clients[i].assign(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }
  finalize_weights(out);
  return out;
}

void validate_partition(const Partition &partition, std::size_t n_samples) {
  if (partition.weights.size() != partition.clients.size()) {
    throw Error("partition: weights/clients size mismatch");
  }
  std::vector<char> seen(n_samples, 0);
  for (const auto &c : partition.clients) {
    if (c.empty()) throw Error("partition: empty client");
    for (auto idx : c) {
      if (idx >= n_samples) throw Error("partition: index out of range");
      if (seen[idx]) throw Error("partition: sample assigned twice");
      seen[idx] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw Error("partition: samples not covered");
  }
  const double sum =
      std::accumulate(partition.weights.begin(), partition.weights.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-12) {
    throw Error("partition: weights sum to " + std::to_string(sum));
  }
}

nlohmann::json partition_to_json(const Partition &partition) {
  return nlohmann::json{{"clients", partition.clients},
                        {"weights", partition.weights}};
}

Partition partition_from_json(const nlohmann::json &j) {
  Partition p;
  p.clients = j.at("clients").get<std::vector<std::vector<std::size_t>>>();
  p.weights = j.at("weights").get<std::vector<double>>();
  return p;
}

}  // namespace fedecado
