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

#ifndef FEDECADO_PARTITION_HPP_
#define FEDECADO_PARTITION_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedecado/dataset.hpp"

namespace fedecado {

// Disjoint split of sample indices over clients with dataset-fraction
// weights p_i = |D_i| / |D|.
struct Partition {
  std::vector<std::vector<std::size_t>> clients;
  std::vector<double> weights;

  std::size_t num_clients() const { return clients.size(); }
  std::size_t num_samples() const;
};

// Per-class client proportions drawn from Dir(alpha). Clients left empty get
// one sample moved from the currently largest client until none is empty.
Partition partition_dirichlet(const Dataset &dataset, std::size_t n_clients,
                              double alpha, std::uint64_t seed);

// Uniform shuffle then near-equal contiguous split.
Partition partition_iid(const Dataset &dataset, std::size_t n_clients,
                        std::uint64_t seed);

// Throws Error if indices overlap, miss samples, or weights do not sum to 1.
void validate_partition(const Partition &partition, std::size_t n_samples);

nlohmann::json partition_to_json(const Partition &partition);
Partition partition_from_json(const nlohmann::json &j);

}  // namespace fedecado

#endif  // FEDECADO_PARTITION_HPP_
