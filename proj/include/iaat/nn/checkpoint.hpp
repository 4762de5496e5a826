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

#include "iaat/nn/network.hpp"
#include "json.hpp"

namespace iaat::nn {

/// Saved model: architecture, flat parameters and provenance.
///
/// On disk: the 8-byte magic "IAATCKPT", a little-endian u32 format version,
/// a u64 length followed by a UTF-8 JSON header {arch, seed, epoch,
/// fingerprint}, a u64 parameter count, then the parameters as little-endian
/// IEEE-754 doubles.
struct Checkpoint {
  Network network;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string fingerprint;  // config fingerprint with seeds excluded
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json arch_to_json(const ArchSpec& arch);
ArchSpec arch_from_json(const nlohmann::json& j);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace iaat::nn
