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

#include "iaat/nn/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace iaat::nn {
namespace {

constexpr char kMagic[8] = {'I', 'A', 'A', 'T', 'C', 'K', 'P', 'T'};

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("truncated checkpoint", pos_);
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

const char* kind_name(LayerSpec::Kind k) {
  switch (k) {
    case LayerSpec::Kind::dense: return "dense";
    case LayerSpec::Kind::relu: return "relu";
    case LayerSpec::Kind::conv2d: return "conv2d";
    case LayerSpec::Kind::flatten: return "flatten";
  }
  return "?";
}

}  // namespace

nlohmann::json arch_to_json(const ArchSpec& arch) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : arch.layers) {
    nlohmann::json j{{"kind", kind_name(l.kind)}};
    if (l.kind == LayerSpec::Kind::dense || l.kind == LayerSpec::Kind::conv2d) j["units"] = l.units;
    if (l.kind == LayerSpec::Kind::conv2d) j["kernel"] = l.kernel;
    layers.push_back(std::move(j));
  }
  return {{"input", {arch.input.channels, arch.input.height, arch.input.width}},
          {"layers", std::move(layers)}};
}

ArchSpec arch_from_json(const nlohmann::json& j) {
  try {
    ArchSpec arch;
    const auto& in = j.at("input");
    if (in.is_number_integer()) {
      arch.input = Shape::flat(in.get<Index>());
    } else {
      if (in.size() != 3) throw ConfigError("arch.input must be an integer or [c, h, w]");
      arch.input = {in[0].get<Index>(), in[1].get<Index>(), in[2].get<Index>()};
    }
    for (const auto& l : j.at("layers")) {
      const std::string kind = l.at("kind").get<std::string>();
      LayerSpec spec;
      if (kind == "dense") {
        spec = {LayerSpec::Kind::dense, l.at("units").get<Index>(), 0};
      } else if (kind == "relu") {
        spec = {LayerSpec::Kind::relu, 0, 0};
      } else if (kind == "conv2d") {
        spec = {LayerSpec::Kind::conv2d, l.at("units").get<Index>(), l.at("kernel").get<Index>()};
      } else if (kind == "flatten") {
        spec = {LayerSpec::Kind::flatten, 0, 0};
      } else {
        throw ConfigError("unknown layer kind '" + kind + "'");
      }
      arch.layers.push_back(spec);
    }
    return arch;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed architecture: ") + e.what());
  }
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const nlohmann::json header{{"arch", arch_to_json(ckpt.network.arch())},
                              {"seed", ckpt.seed},
                              {"epoch", ckpt.epoch},
                              {"fingerprint", ckpt.fingerprint}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kCheckpointVersion, 4);
  put_le(out, text.size(), 8);
  out += text;
  const VectorXd& theta = ckpt.network.parameters();
  put_le(out, static_cast<std::uint64_t>(theta.size()), 8);
  for (Index i = 0; i < theta.size(); ++i) put_le(out, std::bit_cast<std::uint64_t>(theta(i)), 8);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("bad checkpoint magic", 0);
  }
  const std::size_t version_at = in.pos();
  if (in.le(4) != kCheckpointVersion) throw FormatError("unsupported checkpoint version", version_at);
  const std::uint64_t header_len = in.le(8);
  const std::size_t header_at = in.pos();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.take(header_len));
  } catch (const nlohmann::json::parse_error&) {
    throw FormatError("checkpoint header is not valid JSON", header_at);
  }
  Checkpoint ckpt;
  try {
    ckpt.network = Network(arch_from_json(header.at("arch")));
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.fingerprint = header.at("fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), header_at);
  }
  const std::size_t count_at = in.pos();
  const std::uint64_t count = in.le(8);
  if (count != static_cast<std::uint64_t>(ckpt.network.parameter_count())) {
    throw FormatError("parameter count does not match architecture", count_at);
  }
  VectorXd theta(static_cast<Index>(count));
  for (Index i = 0; i < theta.size(); ++i) theta(i) = std::bit_cast<double>(in.le(8));
  if (!in.done()) throw FormatError("trailing bytes after parameters", in.pos());
  ckpt.network.set_parameters(std::move(theta));
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace iaat::nn
