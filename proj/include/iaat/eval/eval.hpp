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
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iaat/attacks/attack.hpp"
#include "iaat/data/dataset.hpp"
#include "iaat/nn/checkpoint.hpp"
#include "json.hpp"

namespace iaat::eval {

using nn::Index;

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<Index> counts;

  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
};

struct EpsilonStatistics {
  double mean = 0.0;
  double std = 0.0;
  Histogram histogram;               // of the final snapshot
  std::vector<double> mean_series;   // one entry per snapshot
  std::vector<double> std_series;
};

/// Results of evaluating one trained model. Fractions are in [0, 1]; radii
/// in pixel units.
struct RunReport {
  double natural_acc = 0.0;
  std::map<std::string, double> whitebox;
  std::optional<double> transfer_acc;
  std::vector<std::pair<double, double>> eps_sweep;  // ascending radius
  std::map<std::string, double> corruption_acc;
  std::optional<EpsilonStatistics> eps_stats;
  std::string config_fingerprint;
  /// Run description: mode, label, training radius, seeds, protocol table.
  nlohmann::json header = nlohmann::json::object();
};

/// Robust accuracy per protocol, keyed by AttackSpec::name(). Throws
/// ConfigError when two protocols share a name.
std::map<std::string, double> whitebox_suite(const nn::Network& net,
                                             const data::LabeledDataset& testset,
                                             const std::vector<attacks::AttackSpec>& protocols,
                                             std::uint64_t seed);

/// Adversarial examples crafted on the surrogate, scored on the target. Both
/// checkpoints must carry the same (seed-free) config fingerprint.
double transfer_attack_eval(const nn::Checkpoint& target, const nn::Checkpoint& surrogate,
                            const data::LabeledDataset& testset, const attacks::AttackSpec& spec,
                            std::uint64_t seed);

/// Robust accuracy at each radius of `eps_grid` (sorted ascending on output).
std::vector<std::pair<double, double>> epsilon_sweep(const nn::Network& net,
                                                     const data::LabeledDataset& testset,
                                                     std::vector<double> eps_grid,
                                                     const attacks::AttackSpec& spec_template,
                                                     std::uint64_t seed);

/// Clean accuracy under each corruption kind, averaged over severities 1..5.
std::map<std::string, double> corruption_accuracy(const nn::Network& net,
                                                  const data::LabeledDataset& testset,
                                                  std::uint64_t seed);

Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins);

/// Mean / spread per snapshot and a fixed-bin histogram of the last one.
EpsilonStatistics epsilon_statistics(const std::vector<std::vector<double>>& history, double lo,
                                     double hi, int bins = 32);

nlohmann::json to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

/// Flat CSV form for cross-run aggregation.
std::string report_csv_header(const RunReport& report);
std::string report_csv_row(const RunReport& report);

}  // namespace iaat::eval
