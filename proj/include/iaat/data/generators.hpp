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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iaat/data/dataset.hpp"
#include "iaat/nn/network.hpp"

namespace iaat::data {

/// Range the generator draws target margins from (pixel units).
struct MarginRange {
  double lo = 0.0;
  double hi = 32.0 / 255.0;
};

/// l-infinity distance from x to the hyperplane w^T x + b = 0, which is
/// |w^T x + b| / ||w||_1 (the l1 norm is the dual of l-infinity).
double linear_margin(const nn::VectorXd& w, double b, const nn::VectorXd& x);

/// Two classes split by a random hyperplane through the centre of the unit
/// cube. Labels are 1 where w^T x + b > 0. Every sample stays at least
/// `box_padding` away from the cube faces so l-infinity balls up to that
/// radius never touch the [0, 1] clip.
///
/// The hyperplane depends only on `weight_seed`; `sample_seed` draws the
/// points, so train and test sets can share one boundary.
LabeledDataset make_linear_oracle(Index n, Index d, std::uint64_t weight_seed, MarginRange margins,
                                  std::uint64_t sample_seed, double box_padding = 0.26);

/// Dense(d -> 2) network computing logits [0, w^T x + b]: the ground-truth
/// classifier of a linear-oracle dataset.
nn::Network linear_classifier(const LinearBoundary& boundary);

/// Two interleaved crescents mapped into the unit square.
///
/// `noise` is the Gaussian jitter standard deviation in output (pixel) units.
/// `overlap` in [0, 1] slides the crescents into each other: 0 keeps the
/// usual gap, 1 closes it entirely. Classes alternate so each holds n/2
/// samples (rounded).
LabeledDataset make_overlap_moons(Index n, double noise, double overlap, std::uint64_t seed);

/// Raw IDX array (unsigned-byte element type only).
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;
};

/// Parses an IDX container. Throws FormatError with the failing byte offset.
IdxArray parse_idx(const std::string& bytes);

/// Images (magic 0x00000803) and labels (magic 0x00000801). Pixels are
/// scaled by 1/255. `limit` keeps the first `limit` samples (0 keeps all).
LabeledDataset load_idx_images(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path, Index limit = 0);

LabeledDataset idx_to_dataset(const IdxArray& images, const IdxArray& labels, Index limit,
                              std::string name);

/// CSV with header sample_index,label,x0,x1,...
std::string dataset_to_csv(const LabeledDataset& dataset);

}  // namespace iaat::data
