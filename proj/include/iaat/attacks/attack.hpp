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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "iaat/data/dataset.hpp"
#include "iaat/nn/network.hpp"
#include "json.hpp"

namespace iaat::attacks {

using nn::Index;
using nn::MatrixXd;
using nn::VectorXd;

enum class Family { fgsm, pgd };

/// l-infinity attack configuration. Radii and step sizes are in [0, 1]
/// pixel units; the JSON form uses /255 units.
struct AttackSpec {
  Family family = Family::pgd;
  int steps = 10;
  /// Absolute step size. When unset the step scales with the radius:
  /// 2.5 * epsilon / steps.
  std::optional<double> step_size = 2.0 / 255.0;
  double epsilon = 8.0 / 255.0;
  int restarts = 1;
  bool random_init = true;
  bool targeted = false;

  static AttackSpec fgsm(double epsilon);
  static AttackSpec pgd(int steps, std::optional<double> step_size, double epsilon,
                        int restarts = 1);

  /// Throws ConfigError when the invariants do not hold.
  void validate() const;

  /// Step size used when attacking at radius `eps`.
  double step_for(double eps) const;

  AttackSpec with_epsilon(double eps) const;

  /// Protocol name, e.g. "PGD10x3" or "FGSM".
  std::string name() const;

  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

nlohmann::json to_json(const AttackSpec& spec);
AttackSpec attack_spec_from_json(const nlohmann::json& j);

/// Parses a radius written in /255 units ("8", "8/255", "1.9/255") into
/// pixel units.
double parse_epsilon_255(const std::string& text);

struct AttackResult {
  nn::Tensor adversarial_input;
  bool success = false;
  double final_loss = 0.0;
};

/// Column-wise result of attacking a batch.
struct BatchAttackResult {
  MatrixXd adversarial;
  std::vector<char> success;
  VectorXd final_loss;
};

/// Attacks every column of `x` inside its own l-infinity ball of radius
/// epsilons[i] intersected with the [0, 1] box.
///
/// Untargeted mode ascends cross-entropy on `labels`; targeted mode descends
/// cross-entropy on `targets` and succeeds when the prediction equals the
/// target. With several restarts a column keeps the first successful
/// restart, otherwise the one with the highest objective.
BatchAttackResult attack_batch(const nn::Network& net, const MatrixXd& x,
                               std::span<const int> labels, std::span<const double> epsilons,
                               const AttackSpec& spec, std::uint64_t seed,
                               std::span<const int> targets = {});

/// Same radius for every column.
BatchAttackResult attack_batch(const nn::Network& net, const MatrixXd& x,
                               std::span<const int> labels, const AttackSpec& spec,
                               std::uint64_t seed, std::span<const int> targets = {});

/// Single-sample PGD / FGSM.
AttackResult pgd_attack(const nn::Network& net, const VectorXd& x, int label,
                        const AttackSpec& spec, std::uint64_t seed,
                        std::optional<int> target = std::nullopt);

/// Uniform over the classes other than `label`.
int sample_random_target(int label, int num_classes, std::mt19937_64& rng);

/// Per-sample outcome of an evaluation attack.
struct RobustnessOutcome {
  std::vector<char> clean_correct;
  std::vector<char> robust;  // clean-correct and the attack failed
  double natural_accuracy = 0.0;
  double robust_accuracy = 0.0;
};

inline constexpr Index kEvalChunk = 256;

/// Robust accuracy of `net` on `dataset` under `spec`. A clean-misclassified
/// sample counts as non-robust.
double evaluate_robust_accuracy(const nn::Network& net, const data::LabeledDataset& dataset,
                                const AttackSpec& spec, std::uint64_t seed);

/// Crafts adversarial inputs for the whole dataset on `source` and scores
/// them on `target_net`. With source == target this is the whitebox case.
RobustnessOutcome evaluate_attack(const nn::Network& target_net, const nn::Network& source,
                                  const data::LabeledDataset& dataset, const AttackSpec& spec,
                                  std::uint64_t seed);

}  // namespace iaat::attacks
