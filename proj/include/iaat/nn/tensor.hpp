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

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "iaat/errors.hpp"

namespace iaat::nn {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// Per-sample feature layout (channels, height, width). Dense data uses
/// channels == size and height == width == 1.
struct Shape {
  Index channels = 1;
  Index height = 1;
  Index width = 1;

  static Shape flat(Index n) { return {n, 1, 1}; }

  Index size() const { return channels * height * width; }
  bool is_flat() const { return height == 1 && width == 1; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width) + "]";
}

/// Dense n-dimensional array with an optional gradient slot.
///
/// Batches are stored sample-major: a tensor of shape {batch, c, h, w} keeps
/// each sample contiguous so it can be viewed as a (c*h*w) x batch Eigen
/// matrix, one column per sample.
template <typename Scalar>
class BasicTensor {
 public:
  BasicTensor() = default;

  BasicTensor(std::vector<Index> shape, Vector<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    for (Index d : shape_) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    }
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape product " +
                       std::to_string(element_count(shape_)));
    }
  }

  static BasicTensor zeros(std::vector<Index> shape) {
    const Index n = element_count(shape);
    return BasicTensor(std::move(shape), Vector<Scalar>::Zero(n));
  }

  /// Wraps a feature-major batch (one column per sample).
  static BasicTensor from_batch(const Matrix<Scalar>& batch, const Shape& sample) {
    if (batch.rows() != sample.size()) {
      throw ShapeError("batch rows do not match sample shape " + to_string(sample));
    }
    Vector<Scalar> flat = Eigen::Map<const Vector<Scalar>>(batch.data(), batch.size());
    return BasicTensor({batch.cols(), sample.channels, sample.height, sample.width},
                       std::move(flat));
  }

  const std::vector<Index>& shape() const { return shape_; }
  const Vector<Scalar>& data() const { return data_; }
  Vector<Scalar>& data() { return data_; }

  bool has_grad() const { return grad_.has_value(); }
  const Vector<Scalar>& grad() const { return grad_.value(); }

  void set_grad(Vector<Scalar> g) {
    if (g.size() != data_.size()) throw ShapeError("gradient shape differs from tensor shape");
    grad_ = std::move(g);
  }
  void clear_grad() { grad_.reset(); }

  Index size() const { return data_.size(); }

  /// Leading dimension is the batch; the rest is flattened per sample.
  Eigen::Map<const Matrix<Scalar>> as_batch() const {
    const Index batch = shape_.empty() ? 1 : shape_.front();
    return {data_.data(), data_.size() / batch, batch};
  }

 private:
  static Index element_count(const std::vector<Index>& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
  }

  std::vector<Index> shape_;
  Vector<Scalar> data_;
  std::optional<Vector<Scalar>> grad_;
};

using Tensor = BasicTensor<double>;

}  // namespace iaat::nn
