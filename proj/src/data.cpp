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

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "iaat/data/corruption.hpp"
#include "iaat/data/dataset.hpp"
#include "iaat/data/generators.hpp"
#include "iaat/seed.hpp"

namespace iaat::data {

void LabeledDataset::validate() const {
  if (inputs.rows() != sample_shape.size()) {
    throw ConfigError("dataset '" + name + "': rows do not match sample shape");
  }
  if (static_cast<Index>(labels.size()) != inputs.cols()) {
    throw ConfigError("dataset '" + name + "': label count differs from sample count");
  }
  if (num_classes < 2) throw ConfigError("dataset '" + name + "': needs at least two classes");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ConfigError("dataset '" + name + "': label out of range");
  }
  if (inputs.size() > 0 && (inputs.minCoeff() < 0.0 || inputs.maxCoeff() > 1.0)) {
    throw ConfigError("dataset '" + name + "': pixel values must lie in [0, 1]");
  }
  if (margins && static_cast<Index>(margins->size()) != inputs.cols()) {
    throw ConfigError("dataset '" + name + "': margin oracle size mismatch");
  }
}

LabeledDataset LabeledDataset::select(std::span<const Index> indices) const {
  LabeledDataset out;
  out.name = name;
  out.sample_shape = sample_shape;
  out.num_classes = num_classes;
  out.boundary = boundary;
  out.inputs.resize(inputs.rows(), static_cast<Index>(indices.size()));
  if (margins) out.margins.emplace();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Index i = indices[k];
    out.inputs.col(static_cast<Index>(k)) = inputs.col(i);
    out.labels.push_back(labels[static_cast<std::size_t>(i)]);
    if (margins) out.margins->push_back((*margins)[static_cast<std::size_t>(i)]);
  }
  return out;
}

double linear_margin(const nn::VectorXd& w, double b, const nn::VectorXd& x) {
  return std::abs(w.dot(x) + b) / w.lpNorm<1>();
}

LabeledDataset make_linear_oracle(Index n, Index d, std::uint64_t weight_seed, MarginRange margins,
                                  std::uint64_t sample_seed, double box_padding) {
  if (d < 2) throw ConfigError("linear oracle needs d >= 2");
  if (!(margins.lo >= 0.0 && margins.lo <= margins.hi)) {
    throw ConfigError("linear oracle margin range must satisfy 0 <= lo <= hi");
  }
  if (!(box_padding >= 0.0 && box_padding < 0.5)) {
    throw ConfigError("linear oracle box padding must lie in [0, 0.5)");
  }
  std::mt19937_64 wrng(weight_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LinearBoundary boundary{nn::VectorXd(d), 0.0};
  for (Index k = 0; k < d; ++k) boundary.w(k) = normal(wrng);
  boundary.b = -boundary.w.sum() * 0.5;  // through the cube centre
  const double l1 = boundary.w.lpNorm<1>();
  const double l2sq = boundary.w.squaredNorm();

  LabeledDataset ds;
  ds.name = "linear_oracle";
  ds.sample_shape = nn::Shape::flat(d);
  ds.num_classes = 2;
  ds.inputs.resize(d, n);
  ds.margins.emplace();
  ds.boundary = boundary;

  std::mt19937_64 rng(sample_seed);
  std::uniform_real_distribution<double> box(box_padding, 1.0 - box_padding);
  std::uniform_real_distribution<double> margin(margins.lo, margins.hi);
  std::bernoulli_distribution side(0.5);
  for (Index i = 0; i < n; ++i) {
    const double target = margin(rng) * (side(rng) ? 1.0 : -1.0);
    nn::VectorXd x(d);
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      for (Index k = 0; k < d; ++k) x(k) = box(rng);
      // Slide along w until the signed l-infinity margin equals the target.
      const double shift = (target * l1 - (boundary.w.dot(x) + boundary.b)) / l2sq;
      x += shift * boundary.w;
      placed = x.minCoeff() >= box_padding && x.maxCoeff() <= 1.0 - box_padding;
    }
    if (!placed) throw ConfigError("linear oracle: margin range too wide for the padded cube");
    ds.inputs.col(i) = x;
    const double score = boundary.w.dot(x) + boundary.b;
    ds.labels.push_back(score > 0.0 ? 1 : 0);
    ds.margins->push_back(std::abs(score) / l1);
  }
  return ds;
}

nn::Network linear_classifier(const LinearBoundary& boundary) {
  const Index d = boundary.w.size();
  nn::Network net(nn::mlp(d, {}, 2));
  nn::VectorXd theta = nn::VectorXd::Zero(net.parameter_count());
  // Column-major 2 x d weights: row 1 holds w.
  for (Index k = 0; k < d; ++k) theta(2 * k + 1) = boundary.w(k);
  theta(2 * d + 1) = boundary.b;
  net.set_parameters(std::move(theta));
  return net;
}

LabeledDataset make_overlap_moons(Index n, double noise, double overlap, std::uint64_t seed) {
  if (n < 2) throw ConfigError("moons needs at least two samples");
  if (!(noise >= 0.0)) throw ConfigError("moons noise must be nonnegative");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("moons overlap must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, 1.0);

  // Classic crescents span x in [-1, 2], y in [-0.5, 1]; the lower one is
  // lifted by 0.5 * overlap, closing the vertical gap between the arcs.
  constexpr double kScale = 1.0 / 3.4;
  LabeledDataset ds;
  ds.name = "overlap_moons";
  ds.sample_shape = nn::Shape::flat(2);
  ds.num_classes = 2;
  ds.inputs.resize(2, n);
  for (Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = angle(rng);
    double px = 0.0;
    double py = 0.0;
    if (label == 0) {
      px = std::cos(t);
      py = std::sin(t);
    } else {
      px = 1.0 - std::cos(t);
      py = 0.5 - std::sin(t) + 0.5 * overlap;
    }
    const double u = (px - 0.5) * kScale + 0.5 + noise * jitter(rng);
    const double v = (py - 0.25) * kScale + 0.5 + noise * jitter(rng);
    ds.inputs(0, i) = std::clamp(u, 0.0, 1.0);
    ds.inputs(1, i) = std::clamp(v, 0.0, 1.0);
    ds.labels.push_back(label);
  }
  return ds;
}

namespace {

std::uint32_t be32(const std::string& bytes, std::size_t at) {
  if (bytes.size() < at + 4) throw FormatError("truncated IDX header", bytes.size());
  std::uint32_t v = 0;
  for (std::size_t k = 0; k < 4; ++k) v = (v << 8) | static_cast<unsigned char>(bytes[at + k]);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

IdxArray parse_idx(const std::string& bytes) {
  const std::uint32_t magic = be32(bytes, 0);
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xffu) != 0x08u) {
    throw FormatError(fmt::format("bad IDX magic 0x{:08x} (expected unsigned-byte data)", magic), 0);
  }
  const std::uint32_t ndims = magic & 0xffu;
  if (ndims == 0) throw FormatError("IDX file declares zero dimensions", 3);
  IdxArray out;
  std::uint64_t count = 1;
  for (std::uint32_t k = 0; k < ndims; ++k) {
    out.dims.push_back(be32(bytes, 4 + 4 * k));
    count *= out.dims.back();
  }
  const std::size_t data_at = 4 + 4 * static_cast<std::size_t>(ndims);
  if (bytes.size() - data_at < count) {
    throw FormatError(fmt::format("IDX payload truncated: expected {} bytes", count), bytes.size());
  }
  out.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(data_at),
                    bytes.begin() + static_cast<std::ptrdiff_t>(data_at + count));
  return out;
}

LabeledDataset idx_to_dataset(const IdxArray& images, const IdxArray& labels, Index limit,
                              std::string name) {
  if (images.dims.size() != 3) throw FormatError("image file must have magic 0x00000803", 3);
  if (labels.dims.size() != 1) throw FormatError("label file must have magic 0x00000801", 3);
  if (images.dims[0] != labels.dims[0]) {
    throw FormatError("image and label counts differ", 4);
  }
  Index n = images.dims[0];
  if (limit > 0) n = std::min(n, limit);
  const Index rows = images.dims[1];
  const Index cols = images.dims[2];
  LabeledDataset ds;
  ds.name = std::move(name);
  ds.sample_shape = {1, rows, cols};
  ds.inputs.resize(rows * cols, n);
  int max_label = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index p = 0; p < rows * cols; ++p) {
      ds.inputs(p, i) = images.values[static_cast<std::size_t>(i * rows * cols + p)] / 255.0;
    }
    const int y = labels.values[static_cast<std::size_t>(i)];
    ds.labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  ds.num_classes = std::max(2, max_label + 1);
  return ds;
}

LabeledDataset load_idx_images(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path, Index limit) {
  return idx_to_dataset(parse_idx(read_file(images_path)), parse_idx(read_file(labels_path)),
                        limit, images_path.stem().string());
}

std::string dataset_to_csv(const LabeledDataset& dataset) {
  std::string out = "sample_index,label";
  for (Index k = 0; k < dataset.inputs.rows(); ++k) out += fmt::format(",x{}", k);
  out += '\n';
  for (Index i = 0; i < dataset.size(); ++i) {
    out += fmt::format("{},{}", i, dataset.labels[static_cast<std::size_t>(i)]);
    for (Index k = 0; k < dataset.inputs.rows(); ++k) out += fmt::format(",{}", dataset.inputs(k, i));
    out += '\n';
  }
  return out;
}

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::uniform_noise: return "uniform_noise";
    case CorruptionKind::box_blur: return "box_blur";
  }
  return "?";
}

CorruptionKind corruption_from_string(const std::string& name) {
  for (CorruptionKind k : kAllCorruptions) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown corruption kind '" + name + "'");
}

namespace {

// Mean over a (2r+1) window along one axis with edge replication.
void box_pass(nn::VectorXd& v, Index count, Index stride, Index base, Index radius) {
  nn::VectorXd line(count);
  for (Index k = 0; k < count; ++k) line(k) = v(base + k * stride);
  for (Index k = 0; k < count; ++k) {
    double acc = 0.0;
    for (Index o = -radius; o <= radius; ++o) acc += line(std::clamp(k + o, Index{0}, count - 1));
    v(base + k * stride) = acc / static_cast<double>(2 * radius + 1);
  }
}

}  // namespace

nn::VectorXd corrupt(const nn::VectorXd& x, const nn::Shape& shape, const CorruptionSpec& spec,
                     std::uint64_t seed) {
  if (spec.severity < 1 || spec.severity > 5) throw ConfigError("corruption severity must be 1..5");
  if (x.size() != shape.size()) throw ShapeError("corrupt: sample does not match shape");
  const auto s = static_cast<std::size_t>(spec.severity - 1);
  std::mt19937_64 rng(seed);
  nn::VectorXd y = x;
  switch (spec.kind) {
    case CorruptionKind::gaussian_noise: {
      constexpr double kSigma[] = {0.04, 0.06, 0.08, 0.09, 0.10};
      std::normal_distribution<double> noise(0.0, kSigma[s]);
      for (Index k = 0; k < y.size(); ++k) y(k) += noise(rng);
      break;
    }
    case CorruptionKind::uniform_noise: {
      constexpr double kHalfWidth[] = {0.05, 0.10, 0.15, 0.20, 0.25};
      std::uniform_real_distribution<double> noise(-kHalfWidth[s], kHalfWidth[s]);
      for (Index k = 0; k < y.size(); ++k) y(k) += noise(rng);
      break;
    }
    case CorruptionKind::box_blur: {
      const Index radius = spec.severity;
      if (shape.is_flat()) {
        box_pass(y, shape.channels, 1, 0, radius);
      } else {
        const Index plane = shape.height * shape.width;
        for (Index c = 0; c < shape.channels; ++c) {
          for (Index r = 0; r < shape.height; ++r) box_pass(y, shape.width, 1, c * plane + r * shape.width, radius);
          for (Index w = 0; w < shape.width; ++w) box_pass(y, shape.height, shape.width, c * plane + w, radius);
        }
      }
      break;
    }
  }
  return y.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace iaat::data
