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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "doctest.h"
#include "iaat/adaptive/iaat.hpp"
#include "iaat/data/corruption.hpp"
#include "iaat/data/generators.hpp"
#include "iaat/errors.hpp"

using namespace iaat;
using namespace iaat::data;
using nn::Index;
using nn::VectorXd;

namespace {

constexpr double k255 = 1.0 / 255.0;

std::string bytes(std::initializer_list<int> v) {
  std::string s;
  for (int b : v) s.push_back(static_cast<char>(b));
  return s;
}

const std::string kLabels3 = bytes({0, 0, 8, 1, 0, 0, 0, 3, 0, 1, 2});
const std::string kImage2x2 = bytes({0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 128, 255, 64});

// Does any sign corner of the eps-ball flip the ground-truth label?
bool corner_flips(const LinearBoundary& bd, const VectorXd& x, double eps) {
  const Index d = x.size();
  const double score = bd.w.dot(x) + bd.b;
  for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
    VectorXd c = x;
    for (Index k = 0; k < d; ++k) c(k) += ((mask >> k) & 1u) ? eps : -eps;
    c = c.cwiseMax(0.0).cwiseMin(1.0);
    const double s = bd.w.dot(c) + bd.b;
    if ((score > 0) != (s > 0)) return true;
  }
  return false;
}

double clean_test_accuracy(double overlap, double noise) {
  const auto train = make_overlap_moons(1000, noise, overlap, 11);
  const auto test = make_overlap_moons(2000, noise, overlap, 12);
  nn::Network net = nn::Network::he_uniform(nn::mlp(2, {32, 32}, 2), 13);
  nn::Sgd<double> opt({0.1, 0.0, {}, 0.1, 0.9});
  const adaptive::FixedConfig cfg{32, attacks::AttackSpec::fgsm(0.0)};
  for (int e = 0; e < 60; ++e) adaptive::train_epoch_fixed(net, opt, train, 0.0, cfg, e, 14);
  const auto pred = nn::predict(net, test.inputs);
  int ok = 0;
  for (Index i = 0; i < test.size(); ++i) ok += pred[i] == test.labels[i];
  return ok / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("idx labels and images") {
  const IdxArray labels = parse_idx(kLabels3);
  CHECK(labels.dims == std::vector<std::uint32_t>{3});
  CHECK(labels.values == std::vector<std::uint8_t>{0, 1, 2});

  const IdxArray image = parse_idx(kImage2x2);
  const auto ds = idx_to_dataset(image, parse_idx(bytes({0, 0, 8, 1, 0, 0, 0, 1, 1})), 0, "tiny");
  CHECK(ds.sample_shape == nn::Shape{1, 2, 2});
  CHECK(ds.inputs(0, 0) == 0.0);
  CHECK(ds.inputs(1, 0) == 128.0 / 255.0);
  CHECK(ds.inputs(2, 0) == 1.0);
  CHECK(ds.inputs(3, 0) == 64.0 / 255.0);
  CHECK(ds.labels == std::vector<int>{1});
  ds.validate();
}

TEST_CASE("idx format errors carry offsets") {
  try {
    parse_idx(bytes({0, 0, 9, 1, 0, 0, 0, 1, 0}));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  const std::string cut = kImage2x2.substr(0, kImage2x2.size() - 1);
  try {
    parse_idx(cut);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == cut.size());
  }
  CHECK_THROWS_AS(parse_idx(bytes({0, 0, 8})), FormatError);
  // Labels where images are expected.
  CHECK_THROWS_AS(idx_to_dataset(parse_idx(kLabels3), parse_idx(kLabels3), 0, "x"), FormatError);
}

TEST_CASE("idx files on disk and truncation") {
  const auto dir = std::filesystem::temp_directory_path() / "iaat_test_data_idx";
  std::filesystem::create_directories(dir);
  std::string images = bytes({0, 0, 8, 3, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0, 2});
  images += bytes({10, 11, 20, 21, 30, 31});
  std::ofstream(dir / "img.idx", std::ios::binary) << images;
  std::ofstream(dir / "lab.idx", std::ios::binary) << kLabels3;

  const auto all = load_idx_images(dir / "img.idx", dir / "lab.idx");
  CHECK(all.size() == 3);
  CHECK(all.num_classes == 3);
  const auto two = load_idx_images(dir / "img.idx", dir / "lab.idx", 2);
  REQUIRE(two.size() == 2);
  CHECK(two.labels == std::vector<int>{0, 1});
  CHECK(two.inputs(0, 1) == 20.0 / 255.0);
  CHECK(two.inputs(1, 1) == 21.0 / 255.0);
  CHECK_THROWS_AS(load_idx_images(dir / "missing.idx", dir / "lab.idx"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("linear margin closed forms") {
  VectorXd w(2);
  w << 1.0, 0.0;
  VectorXd x(2);
  x << 0.3, 0.9;
  CHECK(linear_margin(w, 0.0, x) == doctest::Approx(0.3));
  VectorXd w2(2);
  w2 << 2.0, -1.0;
  VectorXd on(2);
  on << 0.25, 0.5;
  CHECK(linear_margin(w2, 0.0, on) == 0.0);
}

TEST_CASE("linear oracle labels and margins") {
  const auto ds = make_linear_oracle(300, 5, 1, {0.0, 20 * k255}, 2);
  ds.validate();
  const auto& bd = *ds.boundary;
  for (Index i = 0; i < ds.size(); ++i) {
    const double s = bd.w.dot(ds.inputs.col(i)) + bd.b;
    CHECK(ds.labels[i] == (s > 0 ? 1 : 0));
    CHECK((*ds.margins)[i] == doctest::Approx(std::abs(s) / bd.w.lpNorm<1>()));
    CHECK((*ds.margins)[i] <= 20 * k255 + 1e-12);
  }
  CHECK_THROWS_AS(make_linear_oracle(10, 1, 1, {}, 1), ConfigError);
}

TEST_CASE("oracle margins are the exact corner-attack flip radius") {
  const auto ds = make_linear_oracle(500, 6, 3, {0.5 * k255, 24 * k255}, 4);
  const auto& bd = *ds.boundary;
  int within = 0;
  for (Index i = 0; i < ds.size(); ++i) {
    const VectorXd x = ds.inputs.col(i);
    const double m = (*ds.margins)[i];
    CHECK_FALSE(corner_flips(bd, x, m * 0.99));
    CHECK(corner_flips(bd, x, m * 1.01));
    double lo = 0.0;
    double hi = 32 * k255;
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      (corner_flips(bd, x, mid) ? hi : lo) = mid;
    }
    within += std::abs(hi - m) <= 0.02 * m;
  }
  CHECK(within == ds.size());
}

TEST_CASE("moons generator") {
  const auto a = make_overlap_moons(200, 0.03, 0.4, 9);
  const auto b = make_overlap_moons(200, 0.03, 0.4, 9);
  CHECK(std::memcmp(a.inputs.data(), b.inputs.data(), sizeof(double) * a.inputs.size()) == 0);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(a.margins.has_value());
  a.validate();
  CHECK(std::count(a.labels.begin(), a.labels.end(), 1) == 100);
  CHECK_THROWS_AS(make_overlap_moons(10, 0.1, 1.5, 1), ConfigError);
}

TEST_CASE("moons: separated crescents are learnable, overlapping ones are not") {
  CHECK(clean_test_accuracy(0.0, 0.01) >= 0.99);
  CHECK(clean_test_accuracy(1.0, 0.05) < 0.99);
}

TEST_CASE("corruptions stay in the box and are seeded") {
  const nn::Shape shape{1, 8, 8};
  const VectorXd half = VectorXd::Constant(64, 0.5);
  for (CorruptionKind kind : kAllCorruptions) {
    for (int s = 1; s <= 5; ++s) {
      const VectorXd y = corrupt(half, shape, {kind, s}, 5);
      CHECK(y.minCoeff() >= 0.0);
      CHECK(y.maxCoeff() <= 1.0);
      const VectorXd z = corrupt(half, shape, {kind, s}, 5);
      CHECK(std::memcmp(y.data(), z.data(), sizeof(double) * 64) == 0);
    }
  }
  const VectorXd ones = VectorXd::Ones(64);
  CHECK(corrupt(ones, shape, {CorruptionKind::gaussian_noise, 5}, 1).maxCoeff() <= 1.0);
  CHECK((corrupt(half, shape, {CorruptionKind::box_blur, 3}, 1) - half).lpNorm<Eigen::Infinity>() <
        1e-15);
  const VectorXd flat = VectorXd::Constant(2, 0.2);
  CHECK((corrupt(flat, nn::Shape::flat(2), {CorruptionKind::box_blur, 1}, 1) - flat)
            .lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK_THROWS_AS(corrupt(half, shape, {CorruptionKind::gaussian_noise, 6}, 1), ConfigError);
  CHECK_THROWS_AS(corruption_from_string("fog"), ConfigError);
  CHECK(corruption_from_string("uniform_noise") == CorruptionKind::uniform_noise);
}

TEST_CASE("corruption distortion grows with severity") {
  const nn::Shape shape{1, 8, 8};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  VectorXd x(64);
  for (Index k = 0; k < 64; ++k) x(k) = u(rng);
  for (CorruptionKind kind : kAllCorruptions) {
    double prev = 0.0;
    for (int s = 1; s <= 5; ++s) {
      double total = 0.0;
      for (std::uint64_t seed = 0; seed < 100; ++seed) total += (corrupt(x, shape, {kind, s}, seed) - x).norm();
      CAPTURE(to_string(kind));
      CAPTURE(s);
      CHECK(total / 100 >= prev);
      prev = total / 100;
    }
  }
}

TEST_CASE("dataset csv export") {
  const auto ds = make_overlap_moons(3, 0.0, 0.0, 1);
  const std::string csv = dataset_to_csv(ds);
  CHECK(csv.rfind("sample_index,label,x0,x1\n0,0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
