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

#ifndef FEDECADO_DATASET_HPP_
#define FEDECADO_DATASET_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "fedecado/types.hpp"

namespace fedecado {

// Row-major sample table: features.row(k) is sample k, labels[k] its class.
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Eigen::Index feature_dim() const { return features.cols(); }
};

struct BlobSpec {
  std::size_t samples = 1000;
  Eigen::Index features = 2;
  int classes = 2;
  // Standard deviation of each blob around its center; centers are drawn
  // from N(0, I).
  double spread = 1.0;
  std::uint64_t seed = 0;
};

// Gaussian class blobs. Labels cycle through the classes, so class counts
// differ by at most one.
Dataset make_blobs(const BlobSpec &spec);

// Header row, then feature columns followed by one integer label column.
Dataset load_csv(const std::string &path);

// Single-class dataset of `n` zero-dimensional samples. Used to draw
// dataset-size weights for objectives that carry no data (quadratic).
Dataset make_virtual_dataset(std::size_t n);

}  // namespace fedecado

#endif  // FEDECADO_DATASET_HPP_
