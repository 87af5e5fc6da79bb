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

#include "fedecado/dataset.hpp"

#include <fstream>
#include <random>
#include <sstream>

namespace fedecado {

Dataset make_blobs(const BlobSpec &spec) {
  if (spec.classes < 1 || spec.features < 1 || spec.samples == 0) {
    throw ConfigError("make_blobs: need samples, features and classes >= 1");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix centers(spec.classes, spec.features);
  for (Eigen::Index k = 0; k < centers.size(); ++k) {
    centers.data()[k] = normal(rng);
  }

  Dataset out;
  out.num_classes = spec.classes;
  out.features.resize(static_cast<Eigen::Index>(spec.samples), spec.features);
  out.labels.resize(spec.samples);
  for (std::size_t s = 0; s < spec.samples; ++s) {
    const int label = static_cast<int>(s % static_cast<std::size_t>(spec.classes));
    out.labels[s] = label;
    for (Eigen::Index f = 0; f < spec.features; ++f) {
      out.features(static_cast<Eigen::Index>(s), f) =
          centers(label, f) + spec.spread * normal(rng);
    }
  }
  return out;
}

Dataset load_csv(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("load_csv: cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ConfigError("load_csv: '" + path + "' is empty");
  }
  std::size_t columns = 1;
  for (char ch : line) columns += (ch == ',');
  if (columns < 2) {
    throw ConfigError("load_csv: need at least one feature and a label");
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        if (col + 1 < columns) {
          values.push_back(std::stod(cell));
        } else if (col + 1 == columns) {
          std::size_t used = 0;
          const int label = std::stoi(cell, &used);
          labels.push_back(label);
        }
      } catch (const std::exception &) {
        throw ConfigError("load_csv: bad value '" + cell + "' at row " +
                          std::to_string(row));
      }
      ++col;
    }
    if (col != columns) {
      throw ConfigError("load_csv: row " + std::to_string(row) + " has " +
                        std::to_string(col) + " columns, header has " +
                        std::to_string(columns));
    }
  }
  if (labels.empty()) {
    throw ConfigError("load_csv: '" + path + "' has no samples");
  }

  Dataset out;
  const auto n = static_cast<Eigen::Index>(labels.size());
  const auto m = static_cast<Eigen::Index>(columns - 1);
  out.features = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(values.data(), n, m);
  int max_label = 0;
  for (int label : labels) {
    if (label < 0) throw ConfigError("load_csv: negative label");
    max_label = std::max(max_label, label);
  }
  out.labels = std::move(labels);
  out.num_classes = max_label + 1;
  return out;
}

Dataset make_virtual_dataset(std::size_t n) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(n), 0);
  out.labels.assign(n, 0);
  out.num_classes = 1;
  return out;
}

}  // namespace fedecado
