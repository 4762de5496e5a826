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

#include <string>
#include <variant>

#include "iaat/nn/tensor.hpp"

namespace iaat::nn {

// Layers do not own parameters. Each parametrized layer records an offset
// into the network's flat parameter vector and reads its weights through
// Eigen::Map, so the whole model is one contiguous theta.

struct Dense {
  Index in = 0;
  Index out = 0;
  Index offset = 0;

  Shape input_shape() const { return Shape::flat(in); }
  Shape output_shape() const { return Shape::flat(out); }
  Index parameter_count() const { return out * in + out; }
  Index fan_in() const { return in; }

  template <typename Scalar>
  Matrix<Scalar> forward(const Scalar* theta, const Matrix<Scalar>& x) const {
    Eigen::Map<const Matrix<Scalar>> w(theta + offset, out, in);
    Eigen::Map<const Vector<Scalar>> b(theta + offset + out * in, out);
    return (w * x).colwise() + b;
  }

  template <typename Scalar>
  Matrix<Scalar> backward(const Scalar* theta, const Matrix<Scalar>& x,
                          const Matrix<Scalar>& grad_out, Scalar* grad_theta) const {
    Eigen::Map<const Matrix<Scalar>> w(theta + offset, out, in);
    Eigen::Map<Matrix<Scalar>> dw(grad_theta + offset, out, in);
    Eigen::Map<Vector<Scalar>> db(grad_theta + offset + out * in, out);
    dw.noalias() += grad_out * x.transpose();
    db += grad_out.rowwise().sum();
    return w.transpose() * grad_out;
  }
};

struct Relu {
  Shape shape;

  Shape input_shape() const { return shape; }
  Shape output_shape() const { return shape; }
  Index parameter_count() const { return 0; }

  template <typename Scalar>
  Matrix<Scalar> forward(const Scalar*, const Matrix<Scalar>& x) const {
    return x.cwiseMax(Scalar(0));
  }

  template <typename Scalar>
  Matrix<Scalar> backward(const Scalar*, const Matrix<Scalar>& x, const Matrix<Scalar>& grad_out,
                          Scalar*) const {
    return (x.array() > Scalar(0)).select(grad_out, Scalar(0));
  }
};

/// Valid (unpadded) stride-1 convolution over a (c, h, w) sample layout.
/// Weights are laid out [out_channel][in_channel][ky][kx], followed by one
/// bias per output channel.
struct Conv2D {
  Shape in;
  Index out_channels = 0;
  Index kernel = 0;
  Index offset = 0;

  Shape input_shape() const { return in; }
  Shape output_shape() const {
    return {out_channels, in.height - kernel + 1, in.width - kernel + 1};
  }
  Index patch_size() const { return in.channels * kernel * kernel; }
  Index parameter_count() const { return out_channels * patch_size() + out_channels; }
  Index fan_in() const { return patch_size(); }

  // One row per output position, one column per (channel, ky, kx) tap.
  template <typename Scalar>
  Matrix<Scalar> im2row(const Scalar* sample) const {
    const Shape o = output_shape();
    Matrix<Scalar> rows(o.height * o.width, patch_size());
    for (Index oy = 0; oy < o.height; ++oy) {
      for (Index ox = 0; ox < o.width; ++ox) {
        const Index r = oy * o.width + ox;
        Index col = 0;
        for (Index c = 0; c < in.channels; ++c) {
          for (Index ky = 0; ky < kernel; ++ky) {
            for (Index kx = 0; kx < kernel; ++kx) {
              rows(r, col++) = sample[(c * in.height + oy + ky) * in.width + ox + kx];
            }
          }
        }
      }
    }
    return rows;
  }

  template <typename Scalar>
  void row2im_add(const Matrix<Scalar>& rows, Scalar* sample) const {
    const Shape o = output_shape();
    for (Index oy = 0; oy < o.height; ++oy) {
      for (Index ox = 0; ox < o.width; ++ox) {
        const Index r = oy * o.width + ox;
        Index col = 0;
        for (Index c = 0; c < in.channels; ++c) {
          for (Index ky = 0; ky < kernel; ++ky) {
            for (Index kx = 0; kx < kernel; ++kx) {
              sample[(c * in.height + oy + ky) * in.width + ox + kx] += rows(r, col++);
            }
          }
        }
      }
    }
  }

  template <typename Scalar>
  Matrix<Scalar> forward(const Scalar* theta, const Matrix<Scalar>& x) const {
    // Weight rows are output channels; row-major storage so each row is one
    // filter in [in_channel][ky][kx] order.
    using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> w(theta + offset, out_channels, patch_size());
    Eigen::Map<const Vector<Scalar>> b(theta + offset + out_channels * patch_size(),
                                       out_channels);
    const Shape o = output_shape();
    const Index positions = o.height * o.width;
    Matrix<Scalar> y(o.size(), x.cols());
    for (Index s = 0; s < x.cols(); ++s) {
      const Matrix<Scalar> rows = im2row(x.col(s).data());
      // positions x out_channels, column-major == channel-major sample layout.
      Eigen::Map<Matrix<Scalar>> ys(y.col(s).data(), positions, out_channels);
      ys.noalias() = rows * w.transpose();
      ys.rowwise() += b.transpose();
    }
    return y;
  }

  template <typename Scalar>
  Matrix<Scalar> backward(const Scalar* theta, const Matrix<Scalar>& x,
                          const Matrix<Scalar>& grad_out, Scalar* grad_theta) const {
    using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> w(theta + offset, out_channels, patch_size());
    Eigen::Map<RowMajor> dw(grad_theta + offset, out_channels, patch_size());
    Eigen::Map<Vector<Scalar>> db(grad_theta + offset + out_channels * patch_size(),
                                  out_channels);
    const Shape o = output_shape();
    const Index positions = o.height * o.width;
    Matrix<Scalar> grad_in = Matrix<Scalar>::Zero(in.size(), x.cols());
    for (Index s = 0; s < x.cols(); ++s) {
      const Matrix<Scalar> rows = im2row(x.col(s).data());
      Eigen::Map<const Matrix<Scalar>> gs(grad_out.col(s).data(), positions, out_channels);
      dw.noalias() += gs.transpose() * rows;
      db += gs.colwise().sum().transpose();
      const Matrix<Scalar> grad_rows = gs * w;
      row2im_add(grad_rows, grad_in.col(s).data());
    }
    return grad_in;
  }
};

/// Shape bookkeeping only: the column layout is already flat.
struct Flatten {
  Shape in;

  Shape input_shape() const { return in; }
  Shape output_shape() const { return Shape::flat(in.size()); }
  Index parameter_count() const { return 0; }

  template <typename Scalar>
  Matrix<Scalar> forward(const Scalar*, const Matrix<Scalar>& x) const {
    return x;
  }

  template <typename Scalar>
  Matrix<Scalar> backward(const Scalar*, const Matrix<Scalar>&, const Matrix<Scalar>& grad_out,
                          Scalar*) const {
    return grad_out;
  }
};

using Layer = std::variant<Dense, Relu, Conv2D, Flatten>;

inline std::string layer_name(const Layer& layer) {
  struct Visitor {
    std::string operator()(const Dense& d) const {
      return "Dense(" + std::to_string(d.in) + "->" + std::to_string(d.out) + ")";
    }
    std::string operator()(const Relu&) const { return "ReLU"; }
    std::string operator()(const Conv2D& c) const {
      return "Conv2D(" + std::to_string(c.in.channels) + "->" + std::to_string(c.out_channels) +
             ", k=" + std::to_string(c.kernel) + ")";
    }
    std::string operator()(const Flatten&) const { return "Flatten"; }
  };
  return std::visit(Visitor{}, layer);
}

}  // namespace iaat::nn
