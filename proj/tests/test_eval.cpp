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

#include "doctest.h"
#include "iaat/adaptive/iaat.hpp"
#include "iaat/data/generators.hpp"
#include "iaat/errors.hpp"
#include "iaat/eval/eval.hpp"

using namespace iaat;
using namespace iaat::eval;
using attacks::AttackSpec;
using nn::Index;

namespace {

constexpr double k255 = 1.0 / 255.0;

nn::Network train(const data::LabeledDataset& ds, double eps, std::uint64_t seed, int epochs,
                  double lr = 0.1) {
  nn::Network net = nn::Network::he_uniform(nn::mlp(ds.sample_shape.size(), {32, 32}, 2), seed);
  nn::Sgd<double> opt({lr, 0.0, {}, 0.1, 0.9});
  const adaptive::FixedConfig cfg{32, AttackSpec::pgd(10, std::nullopt, eps)};
  for (int e = 0; e < epochs; ++e) adaptive::train_epoch_fixed(net, opt, ds, eps, cfg, e, seed + 1);
  return net;
}

double natural(const nn::Network& net, const data::LabeledDataset& ds) {
  const auto pred = nn::predict(net, ds.inputs);
  Index ok = 0;
  for (Index i = 0; i < ds.size(); ++i) ok += pred[i] == ds.labels[i];
  return static_cast<double>(ok) / static_cast<double>(ds.size());
}

struct Fixture {
  data::LabeledDataset train_set = data::make_overlap_moons(400, 0.02, 0.6, 1);
  data::LabeledDataset test_set = data::make_overlap_moons(400, 0.02, 0.6, 2);
  nn::Network net = train(train_set, 4 * k255, 3, 25);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("whitebox suite names protocols and rejects duplicates") {
  const auto& f = fixture();
  const std::vector<AttackSpec> protocols = {AttackSpec::pgd(10, std::nullopt, 8 * k255, 3),
                                             AttackSpec::pgd(50, std::nullopt, 8 * k255, 2),
                                             AttackSpec::pgd(10, std::nullopt, 0.0, 1)};
  const auto wb = whitebox_suite(f.net, f.test_set, protocols, 5);
  REQUIRE(wb.size() == 3);
  const double nat = natural(f.net, f.test_set);
  CHECK(wb.at("PGD10x1") == nat);
  CHECK(wb.at("PGD10x3") <= nat);
  CHECK(wb.at("PGD50x2") <= nat);
  CHECK_THROWS_AS(whitebox_suite(f.net, f.test_set,
                                 {AttackSpec::pgd(10, std::nullopt, 8 * k255, 3),
                                  AttackSpec::pgd(10, 2 * k255, 4 * k255, 3)},
                                 5),
                  ConfigError);
}

TEST_CASE("more steps never measure more robustness") {
  const auto& f = fixture();
  for (double e255 : {4.0, 8.0, 12.0}) {
    const auto wb = whitebox_suite(f.net, f.test_set,
                                   {AttackSpec::pgd(10, std::nullopt, e255 * k255, 1),
                                    AttackSpec::pgd(50, std::nullopt, e255 * k255, 1)},
                                   9);
    CHECK(wb.at("PGD50x1") <= wb.at("PGD10x1"));
  }
}

TEST_CASE("clean training on a thin-margin set is not robust") {
  const auto tr = data::make_linear_oracle(600, 16, 4, {0.0, 6 * k255}, 5);
  const auto te = data::make_linear_oracle(600, 16, 4, {0.0, 6 * k255}, 6);
  const nn::Network net = train(tr, 0.0, 7, 40, 0.01);
  CHECK(natural(net, te) > 0.8);
  const auto wb = whitebox_suite(net, te, {AttackSpec::pgd(10, std::nullopt, 8 * k255, 3)}, 8);
  CHECK(wb.at("PGD10x3") < 0.05);
}

TEST_CASE("transfer attacks") {
  const auto& f = fixture();
  const nn::Checkpoint target{f.net, 3, 25, "abc"};
  const AttackSpec spec = AttackSpec::pgd(10, std::nullopt, 8 * k255);
  const double wb = attacks::evaluate_robust_accuracy(f.net, f.test_set, spec, 11);
  CHECK(transfer_attack_eval(target, target, f.test_set, spec, 11) == wb);
  CHECK(transfer_attack_eval(target, target, f.test_set, spec.with_epsilon(0.0), 11) ==
        natural(f.net, f.test_set));

  const nn::Checkpoint other{train(f.train_set, 4 * k255, 30, 25), 30, 25, "abc"};
  CHECK(transfer_attack_eval(target, other, f.test_set, spec, 11) >= wb);
  nn::Checkpoint foreign = other;
  foreign.fingerprint = "def";
  CHECK_THROWS_AS(transfer_attack_eval(target, foreign, f.test_set, spec, 11), ConfigError);
}

TEST_CASE("epsilon sweep") {
  const auto& f = fixture();
  const AttackSpec tmpl = AttackSpec::pgd(20, std::nullopt, 8 * k255);
  const auto zero = epsilon_sweep(f.net, f.test_set, {0.0}, tmpl, 1);
  REQUIRE(zero.size() == 1);
  CHECK(zero[0].second == natural(f.net, f.test_set));

  const auto sweep = epsilon_sweep(f.net, f.test_set, {16 * k255, 0.0, 4 * k255, 8 * k255, 2 * k255, 12 * k255}, tmpl, 1);
  REQUIRE(sweep.size() == 6);
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    CHECK(sweep[i].first > sweep[i - 1].first);
    CHECK(sweep[i].second <= sweep[i - 1].second + 0.01);
  }
}

TEST_CASE("corruption accuracy covers every kind") {
  const auto& f = fixture();
  const auto acc = corruption_accuracy(f.net, f.test_set, 3);
  CHECK(acc.size() == 3);
  for (const auto& [kind, v] : acc) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(corruption_accuracy(f.net, f.test_set, 3) == acc);
}

TEST_CASE("histograms and epsilon statistics") {
  const auto h = histogram({0.0, 0.1, 0.25, 0.5, 0.99, 1.0, 2.0}, 0.0, 1.0, 4);
  CHECK(h.counts == std::vector<Index>{2, 1, 1, 3});
  CHECK_THROWS_AS(histogram({}, 1.0, 1.0, 4), ConfigError);

  const std::vector<double> flat(50, 8 * k255);
  const auto s = epsilon_statistics({flat, flat}, 0.0, 64 * k255, 32);
  CHECK(s.std == 0.0);
  CHECK(s.mean == 8 * k255);
  CHECK(s.mean_series.front() == 8 * k255);
  CHECK(std::count_if(s.histogram.counts.begin(), s.histogram.counts.end(), [](Index c) { return c > 0; }) == 1);

  const auto grow = epsilon_statistics({{1, 1, 1, 1}, {0, 2, 0, 2}}, 0.0, 4.0, 4);
  CHECK(grow.std_series == std::vector<double>{0.0, 1.0});
  CHECK(grow.mean_series == std::vector<double>{1.0, 1.0});
}

TEST_CASE("run report json and csv") {
  RunReport r;
  r.natural_acc = 0.9;
  r.whitebox = {{"PGD10x3", 0.6}, {"PGD50x2", 0.55}};
  r.transfer_acc = 0.7;
  r.eps_sweep = {{0.0, 0.9}, {8 * k255, 0.6}};
  r.corruption_acc = {{"box_blur", 0.8}};
  EpsilonStatistics s;
  s.mean = 9 * k255;
  s.std = 1 * k255;
  s.mean_series = {8 * k255, 9 * k255};
  s.std_series = {0.0, 1 * k255};
  s.histogram = histogram({9 * k255}, 0.0, 64 * k255, 4);
  r.eps_stats = s;
  r.config_fingerprint = "0123456789abcdef";
  r.header = {{"mode", "iaat"}};

  const auto j = to_json(r);
  CHECK(j.at("eps_sweep")[1].at("epsilon_255") == doctest::Approx(8.0));
  const RunReport back = report_from_json(nlohmann::json::parse(j.dump()));
  CHECK(to_json(back).dump() == j.dump());
  CHECK(back.whitebox == r.whitebox);
  CHECK(*back.transfer_acc == 0.7);

  const std::string header = report_csv_header(r);
  const std::string row = report_csv_row(r);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
  CHECK(header.find("whitebox_PGD10x3") != std::string::npos);
  CHECK(row.rfind("0123456789abcdef,0.9,0.6,0.55,0.7,", 0) == 0);

  RunReport bare;
  const std::string bare_header = report_csv_header(bare);
  const std::string bare_row = report_csv_row(bare);
  CHECK(std::count(bare_header.begin(), bare_header.end(), ',') ==
        std::count(bare_row.begin(), bare_row.end(), ','));
  CHECK_THROWS_AS(report_from_json(nlohmann::json{{"natural_acc", 1}}), ConfigError);
}
