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
#include <span>
#include <string>
#include <vector>

#include "iaat/attacks/attack.hpp"
#include "iaat/data/dataset.hpp"
#include "iaat/nn/network.hpp"
#include "iaat/nn/optimizer.hpp"

namespace iaat::adaptive {

using nn::Index;

/// Tags mixed into the run seed for each random stream (see derive_seed).
/// Training attacks use {kTrainAttack, epoch, batch}; radius probes use
/// {epoch, batch} followed by kProbeUp / kProbeStay.
enum StreamTag : std::uint64_t {
  kShuffle = 1,
  kTrainAttack = 2,
  kProbeUp = 3,
  kProbeStay = 4,
};

/// Per-sample perturbation radii, addressed by stable dataset index.
/// `history[j]` is the table after epoch j, when snapshots are taken.
struct EpsilonMemory {
  std::vector<double> current;
  std::vector<std::vector<double>> history;
  double min = 0.0;
  double max = 64.0 / 255.0;

  static EpsilonMemory uniform(Index size, double value, double min, double max);

  Index size() const { return static_cast<Index>(current.size()); }
  void snapshot() { history.push_back(current); }

  /// Throws std::logic_error if any entry left [min, max].
  void check_bounds() const;
};

/// Instance-adaptive training hyperparameters. Radii are in pixel units.
struct IaatConfig {
  int epochs = 30;
  int warmup_epochs = 5;
  double warmup_epsilon = 8.0 / 255.0;
  double gamma = 1.9 / 255.0;
  double beta = 0.1;
  double eps_min = 0.0;
  double eps_max = 64.0 / 255.0;
  int batch_size = 128;
  /// Attacker that probes the candidate radii.
  attacks::AttackSpec selection_attack;
  /// Attacker that crafts the training examples; its epsilon is replaced per
  /// sample.
  attacks::AttackSpec training_attack;

  void validate() const;
};

/// Settings for the uniform-radius baseline.
struct FixedConfig {
  int batch_size = 128;
  attacks::AttackSpec attack;
};

/// Three-candidate radius update for one sample: probe prev + gamma, then
/// prev, otherwise fall back to prev - gamma; smooth with beta and clamp to
/// [eps_min, eps_max].
double select_epsilon(const nn::Network& net, const nn::VectorXd& x, int label, double prev,
                      const IaatConfig& cfg, std::uint64_t seed);

/// Batched form of select_epsilon; `prev[i]` belongs to column i of `x`.
std::vector<double> select_epsilons(const nn::Network& net, const nn::MatrixXd& x,
                                    std::span<const int> labels, std::span<const double> prev,
                                    const IaatConfig& cfg, std::uint64_t seed);

/// Smoothed, clamped radius given the previous value and the raw candidate.
double smooth_epsilon(double prev, double raw, const IaatConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;            // mean training objective over the epoch
  double clean_accuracy = 0.0;  // fraction of S+ (clean-correct) samples seen
  double min_applied_eps = 0.0;
  double max_applied_eps = 0.0;
  double mean_applied_eps = 0.0;
  double max_memory_drift = 0.0;
};

/// One epoch of instance-adaptive adversarial training.
///
/// During warmup (epoch < warmup_epochs) every sample is attacked at the
/// warmup radius and the memory is left untouched. Afterwards each batch
/// member's radius is chosen with select_epsilon and written back. Samples
/// the current model misclassifies contribute their clean loss, the others
/// their adversarial loss, averaged over the batch, for one optimizer step.
EpochStats train_epoch_iaat(nn::Network& net, nn::Sgd<double>& opt,
                            const data::LabeledDataset& dataset, EpsilonMemory& mem,
                            const IaatConfig& cfg, int epoch, std::uint64_t seed);

/// One epoch of uniform-radius adversarial training: every sample is trained
/// on its adversarial example. Radius zero is exactly clean training.
EpochStats train_epoch_fixed(nn::Network& net, nn::Sgd<double>& opt,
                             const data::LabeledDataset& dataset, double epsilon,
                             const FixedConfig& cfg, int epoch, std::uint64_t seed);

/// Batch visiting order for an epoch.
std::vector<Index> epoch_order(Index n, int epoch, std::uint64_t seed);

}  // namespace iaat::adaptive

namespace iaat::adaptive {

/// One memory snapshot as CSV: header sample_index,epsilon_255.
std::string memory_to_csv(const std::vector<double>& eps);

/// Inverse of memory_to_csv. Rows may come in any order but indices must be
/// dense in [0, n). Throws FormatError with the offending byte offset.
std::vector<double> memory_from_csv(const std::string& text);

}  // namespace iaat::adaptive
