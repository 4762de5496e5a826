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

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "iaat/nn/layers.hpp"
#include "iaat/nn/loss.hpp"
#include "iaat/nn/tensor.hpp"

namespace iaat::nn {

struct LayerSpec {
  enum class Kind { dense, relu, conv2d, flatten };
  Kind kind = Kind::dense;
  Index units = 0;   // Dense outputs or Conv2D output channels
  Index kernel = 0;  // Conv2D only

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Architecture descriptor: enough to rebuild a network's layer stack.
struct ArchSpec {
  Shape input;
  std::vector<LayerSpec> layers;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

inline constexpr int kMaxDenseLayers = 4;
inline constexpr int kMaxConvLayers = 2;

/// ReLU MLP: in -> hidden... -> classes, no activation on the logit head.
inline ArchSpec mlp(Index in, const std::vector<Index>& hidden, Index classes) {
  ArchSpec arch{Shape::flat(in), {}};
  for (Index h : hidden) {
    arch.layers.push_back({LayerSpec::Kind::dense, h, 0});
    arch.layers.push_back({LayerSpec::Kind::relu, 0, 0});
  }
  arch.layers.push_back({LayerSpec::Kind::dense, classes, 0});
  return arch;
}

/// Resolves an ArchSpec into concrete layers with parameter offsets.
/// Throws ShapeError naming the first layer whose input does not compose.
inline std::vector<Layer> resolve_layers(const ArchSpec& arch, Index* parameter_count) {
  std::vector<Layer> layers;
  Shape shape = arch.input;
  Index offset = 0;
  int dense = 0;
  int conv = 0;
  if (arch.input.size() <= 0) throw ShapeError("network input shape must be non-empty");
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& spec = arch.layers[i];
    const std::string where = "layer " + std::to_string(i);
    switch (spec.kind) {
      case LayerSpec::Kind::dense: {
        if (!shape.is_flat()) {
          throw ShapeError(where + " (Dense) received spatial input " + to_string(shape) +
                           "; insert Flatten first");
        }
        if (spec.units <= 0) throw ShapeError(where + " (Dense) needs a positive width");
        Dense d{shape.channels, spec.units, offset};
        offset += d.parameter_count();
        shape = d.output_shape();
        layers.emplace_back(d);
        ++dense;
        break;
      }
      case LayerSpec::Kind::relu:
        layers.emplace_back(Relu{shape});
        break;
      case LayerSpec::Kind::conv2d: {
        if (spec.units <= 0 || spec.kernel <= 0 || spec.kernel > shape.height ||
            spec.kernel > shape.width) {
          throw ShapeError(where + " (Conv2D) kernel " + std::to_string(spec.kernel) +
                           " does not fit input " + to_string(shape));
        }
        Conv2D c{shape, spec.units, spec.kernel, offset};
        offset += c.parameter_count();
        shape = c.output_shape();
        layers.emplace_back(c);
        ++conv;
        break;
      }
      case LayerSpec::Kind::flatten:
        layers.emplace_back(Flatten{shape});
        shape = Shape::flat(shape.size());
        break;
    }
  }
  if (layers.empty() || !std::holds_alternative<Dense>(layers.back())) {
    throw ShapeError("network must end with a Dense logit head");
  }
  if (dense > kMaxDenseLayers || conv > kMaxConvLayers) {
    throw ConfigError("only small architectures are supported (<= 4 dense, <= 2 conv layers)");
  }
  if (parameter_count != nullptr) *parameter_count = offset;
  return layers;
}

/// Ordered stack of differentiable layers over one flat parameter vector.
template <typename Scalar>
class BasicNetwork {
 public:
  BasicNetwork() = default;

  /// All parameters zero.
  explicit BasicNetwork(ArchSpec arch) : arch_(std::move(arch)) {
    Index count = 0;
    layers_ = resolve_layers(arch_, &count);
    theta_ = Vector<Scalar>::Zero(count);
  }

  /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
  static BasicNetwork he_uniform(ArchSpec arch, std::uint64_t seed) {
    BasicNetwork net(std::move(arch));
    std::mt19937_64 rng(seed);
    for (const Layer& layer : net.layers_) {
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Dense> || std::is_same_v<L, Conv2D>) {
              const double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in()));
              std::uniform_real_distribution<double> dist(-bound, bound);
              const Index weights = l.parameter_count() - l.output_shape().channels;
              for (Index k = 0; k < weights; ++k) {
                net.theta_(l.offset + k) = static_cast<Scalar>(dist(rng));
              }
            }
          },
          layer);
    }
    return net;
  }

  const ArchSpec& arch() const { return arch_; }
  const std::vector<Layer>& layers() const { return layers_; }
  Shape input_shape() const { return arch_.input; }
  Index num_classes() const {
    return std::get<Dense>(layers_.back()).out;
  }

  const Vector<Scalar>& parameters() const { return theta_; }
  Vector<Scalar>& parameters() { return theta_; }
  Index parameter_count() const { return theta_.size(); }

  void set_parameters(Vector<Scalar> theta) {
    if (theta.size() != theta_.size()) {
      throw ShapeError("parameter vector has " + std::to_string(theta.size()) +
                       " entries, network expects " + std::to_string(theta_.size()));
    }
    theta_ = std::move(theta);
  }

 private:
  ArchSpec arch_;
  std::vector<Layer> layers_;
  Vector<Scalar> theta_;
};

using Network = BasicNetwork<double>;

/// Activations of every layer boundary; activations[0] is the input and
/// activations.back() the logits.
template <typename Scalar>
struct Trace {
  std::vector<Matrix<Scalar>> activations;
  const Matrix<Scalar>& logits() const { return activations.back(); }
};

template <typename Scalar>
struct Gradients {
  Vector<Scalar> params;
  Matrix<Scalar> input;
};

template <typename Scalar>
void check_input(const BasicNetwork<Scalar>& net, Index rows) {
  if (rows != net.input_shape().size()) {
    throw ShapeError("layer 0 (" + layer_name(net.layers().front()) + ") expects " +
                     std::to_string(net.input_shape().size()) + " features per sample, got " +
                     std::to_string(rows));
  }
}

template <typename Scalar>
Trace<Scalar> forward_trace(const BasicNetwork<Scalar>& net, const Matrix<Scalar>& x) {
  check_input(net, x.rows());
  Trace<Scalar> trace;
  trace.activations.reserve(net.layers().size() + 1);
  trace.activations.push_back(x);
  const Scalar* theta = net.parameters().data();
  for (const Layer& layer : net.layers()) {
    trace.activations.push_back(std::visit(
        [&](const auto& l) { return l.forward(theta, trace.activations.back()); }, layer));
  }
  return trace;
}

/// Logits, one column per sample.
template <typename Scalar>
Matrix<Scalar> forward(const BasicNetwork<Scalar>& net, const Matrix<Scalar>& x) {
  check_input(net, x.rows());
  Matrix<Scalar> h = x;
  const Scalar* theta = net.parameters().data();
  for (const Layer& layer : net.layers()) {
    h = std::visit([&](const auto& l) { return l.forward(theta, h); }, layer);
  }
  return h;
}

template <typename Scalar>
Tensor forward(const BasicNetwork<Scalar>& net, const BasicTensor<Scalar>& x) {
  const Matrix<Scalar> logits = forward(net, Matrix<Scalar>(x.as_batch()));
  Vector<Scalar> flat = Eigen::Map<const Vector<Scalar>>(logits.data(), logits.size());
  return BasicTensor<Scalar>({logits.cols(), logits.rows()}, std::move(flat));
}

/// Reverse pass from an upstream logit gradient.
template <typename Scalar>
Gradients<Scalar> backward(const BasicNetwork<Scalar>& net, const Trace<Scalar>& trace,
                           const Matrix<Scalar>& grad_logits) {
  Gradients<Scalar> g{Vector<Scalar>::Zero(net.parameter_count()), grad_logits};
  const Scalar* theta = net.parameters().data();
  Scalar* grad_theta = g.params.data();
  for (std::size_t i = net.layers().size(); i-- > 0;) {
    g.input = std::visit(
        [&](const auto& l) {
          return l.backward(theta, trace.activations[i], g.input, grad_theta);
        },
        net.layers()[i]);
  }
  require_finite(g.params, "parameter gradients");
  require_finite(g.input, "input gradients");
  return g;
}

template <typename Scalar>
struct LossGradients {
  Scalar loss{};                // reduced loss
  Vector<Scalar> per_sample;    // unreduced cross-entropy
  Matrix<Scalar> logits;
  Gradients<Scalar> grads;
};

/// Cross-entropy of a labelled batch with parameter and input gradients in
/// one reverse pass. With Reduction::sum each input column receives the
/// gradient of its own sample's loss.
template <typename Scalar>
LossGradients<Scalar> loss_and_gradients(const BasicNetwork<Scalar>& net, const Matrix<Scalar>& x,
                                         std::span<const int> labels,
                                         Reduction reduction = Reduction::mean) {
  Trace<Scalar> trace = forward_trace(net, x);
  BatchLoss<Scalar> ce = batch_cross_entropy(trace.logits(), labels);
  const Scalar scale = reduction == Reduction::mean ? Scalar(1) / Scalar(x.cols()) : Scalar(1);
  LossGradients<Scalar> out;
  out.loss = ce.values.sum() * scale;
  out.per_sample = ce.values;
  out.grads = backward(net, trace, Matrix<Scalar>(ce.grad * scale));
  out.logits = trace.logits();
  return out;
}

/// Mean cross-entropy gradients w.r.t. parameters and input.
template <typename Scalar>
Gradients<Scalar> backward(const BasicNetwork<Scalar>& net, const Matrix<Scalar>& x,
                           std::span<const int> labels) {
  return loss_and_gradients(net, x, labels, Reduction::mean).grads;
}

template <typename Scalar>
std::vector<int> predict(const BasicNetwork<Scalar>& net, const Matrix<Scalar>& x) {
  return argmax_columns(forward(net, x));
}

}  // namespace iaat::nn
