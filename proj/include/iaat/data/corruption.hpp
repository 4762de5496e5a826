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
#include <string>

#include "iaat/nn/tensor.hpp"

namespace iaat::data {

enum class CorruptionKind { gaussian_noise, uniform_noise, box_blur };

inline constexpr CorruptionKind kAllCorruptions[] = {
    CorruptionKind::gaussian_noise, CorruptionKind::uniform_noise, CorruptionKind::box_blur};

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 1;  // 1..5
};

std::string to_string(CorruptionKind kind);
CorruptionKind corruption_from_string(const std::string& name);

/// Corrupts one sample laid out as `shape` and clips the result to [0, 1].
/// Blur on flat samples runs along the feature axis.
nn::VectorXd corrupt(const nn::VectorXd& x, const nn::Shape& shape, const CorruptionSpec& spec,
                     std::uint64_t seed);

}  // namespace iaat::data
