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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "doctest.h"
#include "iaat/adaptive/iaat.hpp"
#include "iaat/data/generators.hpp"
#include "iaat/errors.hpp"
#include "iaat/seed.hpp"

using namespace iaat;
using namespace iaat::adaptive;
using nn::Index;
using nn::MatrixXd;
using nn::VectorXd;

namespace {

constexpr double k255 = 1.0 / 255.0;

IaatConfig base_config() {
  IaatConfig cfg;
  cfg.epochs = 30;
  cfg.warmup_epochs = 2;
  cfg.warmup_epsilon = 8 * k255;
  cfg.gamma = 1.9 * k255;
  cfg.beta = 0.1;
  cfg.eps_min = 0.0;
  cfg.eps_max = 64 * k255;
  cfg.batch_size = 32;
  cfg.selection_attack = attacks::AttackSpec::pgd(10, std::nullopt, 8 * k255);
  cfg.training_attack = attacks::AttackSpec::pgd(10, std::nullopt, 8 * k255);
  return cfg;
}

// Classifier with logits [0, x0 - 0.5]: the l-inf margin of (0.5 + m, y) is m.
nn::Network axis_classifier() {
  data::LinearBoundary bd;
  bd.w = VectorXd::Zero(2);
  bd.w(0) = 1.0;
  bd.b = -0.5;
  return data::linear_classifier(bd);
}

VectorXd point_with_margin(double m) {
  VectorXd x(2);
  x << 0.5 + m, 0.4;
  return x;
}

bool same_bits(const VectorXd& a, const VectorXd& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

MatrixXd gather(const MatrixXd& x, const std::vector<Index>& order) {
  MatrixXd out(x.rows(), static_cast<Index>(order.size()));
  for (std::size_t k = 0; k < order.size(); ++k) out.col(static_cast<Index>(k)) = x.col(order[k]);
  return out;
}

std::vector<int> gather(const std::vector<int>& y, const std::vector<Index>& order) {
  std::vector<int> out;
  for (Index i : order) out.push_back(y[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("radius update examples on a frozen linear model") {
  const nn::Network net = axis_classifier();
  const IaatConfig cfg = base_config();
  const double prev = 8 * k255;

  // Robust at prev + gamma: margin 12 > 9.9.
  CHECK(std::abs(select_epsilon(net, point_with_margin(12 * k255), 1, prev, cfg, 5) -
                 (0.9 * 8 + 0.1 * 9.9) * k255) < 1e-12);
  // Broken at both candidates: margin 5 < 8.
  CHECK(std::abs(select_epsilon(net, point_with_margin(5 * k255), 1, prev, cfg, 5) -
                 (0.9 * 8 + 0.1 * 6.1) * k255) < 1e-12);
  // Broken at 9.9 but robust at 8: margin 9.
  CHECK(std::abs(select_epsilon(net, point_with_margin(9 * k255), 1, prev, cfg, 5) - prev) < 1e-12);
}

TEST_CASE("beta one returns the raw candidate") {
  const nn::Network net = axis_classifier();
  IaatConfig cfg = base_config();
  cfg.beta = 1.0;
  CHECK(std::abs(select_epsilon(net, point_with_margin(12 * k255), 1, 8 * k255, cfg, 1) -
                 9.9 * k255) < 1e-12);
  CHECK(std::abs(select_epsilon(net, point_with_margin(5 * k255), 1, 8 * k255, cfg, 1) -
                 6.1 * k255) < 1e-12);
  CHECK(smooth_epsilon(0.1, 0.2, cfg) == 0.2);
}

TEST_CASE("the lower candidate clamps at eps_min") {
  const nn::Network net = axis_classifier();
  IaatConfig cfg = base_config();
  cfg.beta = 1.0;
  cfg.eps_min = 0.5 * k255;
  cfg.warmup_epsilon = 1 * k255;
  // Misclassified point: every probe fails.
  const double got = select_epsilon(net, point_with_margin(-3 * k255), 1, 1 * k255, cfg, 1);
  CHECK(got == cfg.eps_min);
  cfg.eps_max = 9 * k255;
  CHECK(smooth_epsilon(8 * k255, 20 * k255, cfg) == cfg.eps_max);
}

TEST_CASE("iterated selection settles within gamma of the margin") {
  const nn::Network net = axis_classifier();
  const IaatConfig cfg = base_config();
  for (double m255 : {3.3, 11.7, 20.2}) {
    const double m = m255 * k255;
    const VectorXd x = point_with_margin(m);
    double eps = cfg.warmup_epsilon;
    std::vector<double> tail;
    for (int it = 0; it < 400; ++it) {
      eps = select_epsilon(net, x, 1, eps, cfg, derive_seed(9, {static_cast<std::uint64_t>(it)}));
      if (it >= 350) tail.push_back(eps);
    }
    CHECK(std::abs(eps - m) <= cfg.gamma);
    const auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
    CHECK(*hi - *lo <= cfg.beta * cfg.gamma + 1e-15);
  }
}

TEST_CASE("converged radii rank like the true margins") {
  const auto ds = data::make_linear_oracle(200, 6, 21, {0.0, 32 * k255}, 22);
  const nn::Network net = data::linear_classifier(*ds.boundary);
  const IaatConfig cfg = base_config();
  std::vector<double> mem(static_cast<std::size_t>(ds.size()), cfg.warmup_epsilon);
  for (int it = 0; it < 200; ++it) {
    mem = select_epsilons(net, ds.inputs, ds.label_span(), mem, cfg,
                          derive_seed(4, {static_cast<std::uint64_t>(it)}));
  }
  const auto& margins = *ds.margins;
  int close = 0;
  for (std::size_t i = 0; i < mem.size(); ++i) close += std::abs(mem[i] - margins[i]) <= cfg.gamma;
  CHECK(close >= 190);
  CHECK(spearman(mem, margins) >= 0.9);
}

TEST_CASE("warmup applies the warmup radius and leaves memory alone") {
  const auto ds = data::make_overlap_moons(120, 0.02, 0.5, 3);
  nn::Network net = nn::Network::he_uniform(nn::mlp(2, {8}, 2), 4);
  nn::Sgd<double> opt({0.05, 0.0, {}, 0.1, 0.9});
  IaatConfig cfg = base_config();
  cfg.warmup_epochs = 3;
  auto mem = EpsilonMemory::uniform(ds.size(), cfg.warmup_epsilon, cfg.eps_min, cfg.eps_max);
  for (int e = 0; e < 3; ++e) {
    const auto st = train_epoch_iaat(net, opt, ds, mem, cfg, e, 8);
    CHECK(st.min_applied_eps == cfg.warmup_epsilon);
    CHECK(st.max_applied_eps == cfg.warmup_epsilon);
    CHECK(st.max_memory_drift == 0.0);
    for (double v : mem.current) CHECK(v == cfg.warmup_epsilon);
  }
}

TEST_CASE("memory drift per epoch is bounded by beta * gamma") {
  const auto ds = data::make_overlap_moons(160, 0.03, 0.6, 5);
  nn::Network net = nn::Network::he_uniform(nn::mlp(2, {16}, 2), 6);
  nn::Sgd<double> opt({0.05, 0.0, {}, 0.1, 0.9});
  IaatConfig cfg = base_config();
  cfg.beta = 0.5;
  cfg.warmup_epochs = 1;
  auto mem = EpsilonMemory::uniform(ds.size(), cfg.warmup_epsilon, cfg.eps_min, cfg.eps_max);
  for (int e = 0; e < 6; ++e) {
    const auto before = mem.current;
    const auto st = train_epoch_iaat(net, opt, ds, mem, cfg, e, 12);
    mem.check_bounds();
    double worst = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      worst = std::max(worst, std::abs(mem.current[i] - before[i]));
    }
    CHECK(worst <= cfg.beta * cfg.gamma + 1e-15);
    CHECK(st.max_memory_drift == worst);
  }
}

TEST_CASE("a batch of misclassified samples takes a clean step") {
  const auto ds = data::make_linear_oracle(40, 4, 31, {4 * k255, 30 * k255}, 32);
  data::LinearBoundary flipped{-ds.boundary->w, -ds.boundary->b};
  nn::Network net = data::linear_classifier(flipped);
  const auto pred = nn::predict(net, ds.inputs);
  for (Index i = 0; i < ds.size(); ++i) REQUIRE(pred[i] != ds.labels[i]);

  nn::Network oracle = net;
  const nn::OptimizerState st{0.1, 0.0, {}, 0.1, 0.9};
  nn::Sgd<double> opt(st);
  nn::Sgd<double> opt_oracle(st);

  IaatConfig cfg = base_config();
  cfg.batch_size = 64;
  auto mem = EpsilonMemory::uniform(ds.size(), cfg.warmup_epsilon, cfg.eps_min, cfg.eps_max);
  train_epoch_iaat(net, opt, ds, mem, cfg, 0, 17);

  const auto order = epoch_order(ds.size(), 0, 17);
  const auto y = gather(ds.labels, order);
  opt_oracle.step(oracle, nn::backward(oracle, gather(ds.inputs, order), y).params, 0);
  CHECK(same_bits(net.parameters(), oracle.parameters()));
}

TEST_CASE("one fixed-radius epoch equals attack then step") {
  const auto ds = data::make_overlap_moons(50, 0.02, 0.5, 41);
  nn::Network net = nn::Network::he_uniform(nn::mlp(2, {8}, 2), 42);
  nn::Network oracle = net;
  const nn::OptimizerState st{0.1, 5e-4, {}, 0.1, 0.9};
  nn::Sgd<double> opt(st);
  nn::Sgd<double> opt_oracle(st);
  FixedConfig cfg{64, attacks::AttackSpec::pgd(10, 2 * k255, 8 * k255)};
  const std::uint64_t seed = 77;
  train_epoch_fixed(net, opt, ds, 6 * k255, cfg, 0, seed);

  const auto order = epoch_order(ds.size(), 0, seed);
  const MatrixXd x = gather(ds.inputs, order);
  const auto y = gather(ds.labels, order);
  const auto adv = attacks::attack_batch(oracle, x, y, cfg.attack.with_epsilon(6 * k255),
                                         derive_seed(seed, {kTrainAttack, 0, 0}));
  opt_oracle.step(oracle, nn::backward(oracle, adv.adversarial, y).params, 0);
  CHECK(same_bits(net.parameters(), oracle.parameters()));
}

TEST_CASE("one adaptive epoch equals select, split, then step") {
  const auto ds = data::make_overlap_moons(60, 0.05, 0.8, 51);
  nn::Network net = nn::Network::he_uniform(nn::mlp(2, {8}, 2), 52);
  nn::Network oracle = net;
  const nn::OptimizerState st{0.1, 0.0, {}, 0.1, 0.9};
  nn::Sgd<double> opt(st);
  nn::Sgd<double> opt_oracle(st);
  IaatConfig cfg = base_config();
  cfg.warmup_epochs = 1;
  cfg.batch_size = 64;
  const std::uint64_t seed = 3;
  const int epoch = 1;
  auto mem = EpsilonMemory::uniform(ds.size(), cfg.warmup_epsilon, cfg.eps_min, cfg.eps_max);
  train_epoch_iaat(net, opt, ds, mem, cfg, epoch, seed);

  const auto order = epoch_order(ds.size(), epoch, seed);
  const MatrixXd x = gather(ds.inputs, order);
  const auto y = gather(ds.labels, order);
  const std::vector<double> prev(order.size(), cfg.warmup_epsilon);
  const auto eps = select_epsilons(oracle, x, y, prev, cfg, derive_seed(seed, {1, 0}));
  const auto adv = attacks::attack_batch(oracle, x, y, eps, cfg.training_attack,
                                         derive_seed(seed, {kTrainAttack, 1, 0}));
  const auto pred = nn::predict(oracle, x);
  MatrixXd mixed = x;
  int adversarial = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (pred[k] == y[k]) {
      mixed.col(static_cast<Index>(k)) = adv.adversarial.col(static_cast<Index>(k));
      ++adversarial;
    }
  }
  CHECK(adversarial > 0);
  CHECK(adversarial < static_cast<int>(order.size()));
  opt_oracle.step(oracle, nn::backward(oracle, mixed, y).params, epoch);
  CHECK(same_bits(net.parameters(), oracle.parameters()));
  for (std::size_t k = 0; k < order.size(); ++k) {
    CHECK(mem.current[static_cast<std::size_t>(order[k])] == eps[k]);
  }
}

TEST_CASE("fixed radius zero is clean training") {
  const auto ds = data::make_overlap_moons(100, 0.02, 0.5, 61);
  nn::Network net = nn::Network::he_uniform(nn::mlp(2, {8}, 2), 62);
  nn::Network oracle = net;
  const nn::OptimizerState st{0.1, 0.0, {}, 0.1, 0.9};
  nn::Sgd<double> opt(st);
  nn::Sgd<double> opt_oracle(st);
  const FixedConfig cfg{32, attacks::AttackSpec::pgd(10, 2 * k255, 8 * k255)};
  for (int e = 0; e < 3; ++e) {
    train_epoch_fixed(net, opt, ds, 0.0, cfg, e, 63);
    const auto order = epoch_order(ds.size(), e, 63);
    for (std::size_t s = 0; s < order.size(); s += 32) {
      const std::vector<Index> part(order.begin() + static_cast<std::ptrdiff_t>(s),
                                    order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + 32)));
      opt_oracle.step(oracle, nn::backward(oracle, gather(ds.inputs, part), gather(ds.labels, part)).params, e);
    }
  }
  CHECK(same_bits(net.parameters(), oracle.parameters()));
}

TEST_CASE("radii grow past the warmup value on separable data") {
  const auto ds = data::make_linear_oracle(400, 2, 71, {10 * k255, 40 * k255}, 72);
  nn::Network net = nn::Network::he_uniform(nn::mlp(2, {16}, 2), 73);
  nn::Sgd<double> opt({0.1, 0.0, {}, 0.1, 0.9});
  IaatConfig cfg = base_config();
  cfg.epochs = 20;
  cfg.warmup_epochs = 3;
  cfg.warmup_epsilon = 4 * k255;
  cfg.beta = 0.5;
  auto mem = EpsilonMemory::uniform(ds.size(), cfg.warmup_epsilon, cfg.eps_min, cfg.eps_max);
  double best = 0.0;
  for (int e = 0; e < cfg.epochs; ++e) {
    train_epoch_iaat(net, opt, ds, mem, cfg, e, 74);
    const double mean = std::accumulate(mem.current.begin(), mem.current.end(), 0.0) /
                        static_cast<double>(mem.size());
    best = std::max(best, mean);
  }
  CHECK(best > cfg.warmup_epsilon);
}

TEST_CASE("adaptive training is bit-reproducible") {
  auto run = [] {
    const auto ds = data::make_overlap_moons(80, 0.03, 0.6, 81);
    nn::Network net = nn::Network::he_uniform(nn::mlp(2, {8}, 2), 82);
    nn::Sgd<double> opt({0.05, 0.0, {}, 0.1, 0.9});
    IaatConfig cfg = base_config();
    cfg.warmup_epochs = 1;
    auto mem = EpsilonMemory::uniform(ds.size(), cfg.warmup_epsilon, cfg.eps_min, cfg.eps_max);
    for (int e = 0; e < 4; ++e) train_epoch_iaat(net, opt, ds, mem, cfg, e, 83);
    return std::make_pair(net.parameters(), mem.current);
  };
  const auto a = run();
  const auto b = run();
  CHECK(same_bits(a.first, b.first));
  CHECK(std::memcmp(a.second.data(), b.second.data(), sizeof(double) * a.second.size()) == 0);
}

TEST_CASE("config and memory validation") {
  IaatConfig cfg = base_config();
  cfg.warmup_epochs = cfg.epochs;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = base_config();
  cfg.gamma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = base_config();
  cfg.beta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.beta = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(EpsilonMemory::uniform(3, 1.0, 0.0, 0.5), ConfigError);

  const auto ds = data::make_overlap_moons(20, 0.02, 0.5, 1);
  nn::Network net = nn::Network::he_uniform(nn::mlp(2, {4}, 2), 1);
  nn::Sgd<double> opt({0.05, 0.0, {}, 0.1, 0.9});
  auto mem = EpsilonMemory::uniform(19, 8 * k255, 0.0, 64 * k255);
  CHECK_THROWS_AS(train_epoch_iaat(net, opt, ds, mem, base_config(), 0, 1), ConfigError);
}

TEST_CASE("memory csv round trip and errors") {
  const std::vector<double> eps = {8 * k255, 0.0, 9.71 * k255, 64 * k255, 1e-3};
  const std::string text = memory_to_csv(eps);
  CHECK(text.rfind("sample_index,epsilon_255\n0,8\n1,0\n", 0) == 0);
  const auto back = memory_from_csv(text);
  REQUIRE(back.size() == eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) CHECK(back[i] == doctest::Approx(eps[i]).epsilon(1e-14));
  CHECK(memory_to_csv(back) == text);

  const auto shuffled = memory_from_csv("sample_index,epsilon_255\n1,2\n0,3\n");
  REQUIRE(shuffled.size() == 2);
  CHECK(shuffled[0] == doctest::Approx(3 * k255));
  CHECK(shuffled[1] == doctest::Approx(2 * k255));

  try {
    memory_from_csv("index,eps\n0,1\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  try {
    memory_from_csv("sample_index,epsilon_255\n0,1\n1,x\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 29);
  }
  CHECK_THROWS_AS(memory_from_csv("sample_index,epsilon_255\n0,1\n2,1\n"), FormatError);
  CHECK_THROWS_AS(memory_from_csv("sample_index,epsilon_255\n0,1\n0,1\n"), FormatError);
  CHECK_THROWS_AS(memory_from_csv("sample_index,epsilon_255\n0,-1\n"), FormatError);
}
