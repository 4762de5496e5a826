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

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "iaat/nn/tensor.hpp"

namespace iaat::nn {

template <typename Scalar>
struct LossValue {
  Scalar value{};
  Vector<Scalar> grad;  // d value / d logits
};

/// Per-sample (unreduced) cross-entropy of a batch of logit columns.
template <typename Scalar>
struct BatchLoss {
  Vector<Scalar> values;
  Matrix<Scalar> grad;
};

enum class Reduction { mean, sum };

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

/// Numerically stable softmax (max-subtracted) of each column.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> p = logits;
  for (Index c = 0; c < p.cols(); ++c) {
    p.col(c).array() -= p.col(c).maxCoeff();
    p.col(c) = p.col(c).array().exp().matrix();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

template <typename Derived>
LossValue<typename Derived::Scalar> cross_entropy(const Eigen::MatrixBase<Derived>& logits,
                                                  int label) {
  using Scalar = typename Derived::Scalar;
  static_assert(Derived::ColsAtCompileTime == 1, "cross_entropy expects a logit vector");
  require_finite(logits, "logits");
  if (label < 0 || label >= logits.size()) {
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(logits.size()) + " classes");
  }
  const Scalar top = logits.maxCoeff();
  const Vector<Scalar> shifted = logits.array() - top;
  const Scalar log_norm = std::log(shifted.array().exp().sum());
  LossValue<Scalar> out;
  out.value = log_norm - shifted(label);
  out.grad = (shifted.array() - log_norm).exp().matrix();
  out.grad(label) -= Scalar(1);
  return out;
}

template <typename Derived>
BatchLoss<typename Derived::Scalar> batch_cross_entropy(const Eigen::MatrixBase<Derived>& logits,
                                                        std::span<const int> labels) {
  using Scalar = typename Derived::Scalar;
  if (static_cast<Index>(labels.size()) != logits.cols()) {
    throw ShapeError("label count does not match batch size");
  }
  BatchLoss<Scalar> out{Vector<Scalar>(logits.cols()), Matrix<Scalar>(logits.rows(), logits.cols())};
  for (Index c = 0; c < logits.cols(); ++c) {
    auto l = cross_entropy(logits.col(c), labels[static_cast<std::size_t>(c)]);
    out.values(c) = l.value;
    out.grad.col(c) = l.grad;
  }
  return out;
}

/// Index of the largest logit per column; ties resolve to the lowest class.
template <typename Derived>
std::vector<int> argmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Index c = 0; c < logits.cols(); ++c) {
    Index best = 0;
    logits.col(c).maxCoeff(&best);
    out[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace iaat::nn
