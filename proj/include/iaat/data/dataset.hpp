// Copyright 2026 The IAAT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iaat/nn/tensor.hpp"

namespace iaat::data {

using nn::Index;

/// Hyperplane w^T x + b = 0 that generated a linear-oracle dataset.
struct LinearBoundary {
  nn::VectorXd w;
  double b = 0.0;
};

/// Labelled samples with pixel values in [0, 1]. Column i of `inputs` is the
/// sample with stable index i.
struct LabeledDataset {
  std::string name;
  nn::Shape sample_shape;
  nn::MatrixXd inputs;
  std::vector<int> labels;
  int num_classes = 0;
  /// Exact l-infinity distance of each sample to the ground-truth boundary,
  /// when the generator knows it.
  std::optional<std::vector<double>> margins;
  std::optional<LinearBoundary> boundary;

  Index size() const { return inputs.cols(); }
  std::span<const int> label_span() const { return labels; }

  /// Throws ConfigError on inconsistent sizes, labels or pixel range.
  void validate() const;

  /// Samples in `indices` order, re-indexed densely from zero.
  LabeledDataset select(std::span<const Index> indices) const;
};

}  // namespace iaat::data
