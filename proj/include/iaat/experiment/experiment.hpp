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
#include <optional>
#include <string>
#include <vector>

#include "iaat/adaptive/iaat.hpp"
#include "iaat/attacks/attack.hpp"
#include "iaat/data/dataset.hpp"
#include "iaat/eval/eval.hpp"
#include "iaat/nn/checkpoint.hpp"
#include "iaat/nn/optimizer.hpp"
#include "json.hpp"

namespace iaat::experiment {

using nn::Index;

struct DatasetConfig {
  std::string kind = "moons";  // moons | linear_oracle | idx
  Index train_size = 1000;
  Index test_size = 1000;
  // moons
  double noise = 0.02;
  double overlap = 0.5;
  // linear_oracle
  Index dim = 8;
  double margin_lo = 0.0;
  double margin_hi = 32.0 / 255.0;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
};

struct EvaluationConfig {
  double reference_epsilon = 8.0 / 255.0;
  std::vector<attacks::AttackSpec> protocols;
  std::vector<double> sweep;
  attacks::AttackSpec sweep_attack;
  bool corruptions = true;
  std::optional<attacks::AttackSpec> transfer;
  std::uint64_t surrogate_seed_offset = 1000;
  int histogram_bins = 32;
};

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t model = 2;  // initialization and training streams
  std::uint64_t eval = 3;
};

enum class TrainingMode { clean, fixed_eps, iaat };

std::string to_string(TrainingMode mode);

/// Everything needed to reproduce one run. Radii are in pixel units.
struct ExperimentConfig {
  std::string name = "experiment";
  DatasetConfig dataset;
  nn::ArchSpec arch;
  TrainingMode mode = TrainingMode::iaat;
  double epsilon = 8.0 / 255.0;  // fixed_eps radius
  int epochs = 30;
  int batch_size = 128;
  nn::OptimizerState optimizer;
  attacks::AttackSpec training_attack;
  /// IAAT parameters; epochs, batch size and training attack mirror the
  /// top-level fields.
  adaptive::IaatConfig iaat;
  EvaluationConfig evaluation;
  Seeds seeds;
  std::string output_dir = "runs/experiment";

  /// Human-readable run label ("fixed 4/255", "IAAT", ...).
  std::string label() const;
};

/// Parses and validates. Throws ConfigError naming the offending field.
/// A fixed-radius run at radius zero is normalized to clean training.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical, fully-populated serialization (sorted keys).
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Stable hash of the canonical config, output directory excluded.
std::string fingerprint(const ExperimentConfig& cfg);

/// Hash of everything that shapes training except the model seed: two
/// models with equal model fingerprints are independent copies.
std::string model_fingerprint(const ExperimentConfig& cfg);

/// FNV-1a 64-bit as 16 hex digits.
std::string stable_hash(const std::string& text);

struct Datasets {
  data::LabeledDataset train;
  data::LabeledDataset test;
};

Datasets build_datasets(const ExperimentConfig& cfg);

struct TrainedRun {
  nn::Checkpoint checkpoint;
  std::vector<std::vector<double>> memory_history;  // iaat mode, one per epoch
  std::vector<adaptive::EpochStats> log;
};

TrainedRun train_model(const ExperimentConfig& cfg, const Datasets& data);

/// Same config with the model seed shifted by the surrogate offset.
ExperimentConfig surrogate_config(const ExperimentConfig& cfg);

/// Runs every evaluation protocol of the config. Transfer results need a
/// surrogate checkpoint; requesting them without one is a ConfigError.
eval::RunReport evaluate_model(const ExperimentConfig& cfg, const nn::Checkpoint& model,
                               const Datasets& data,
                               const std::vector<std::vector<double>>& memory_history = {},
                               const nn::Checkpoint* surrogate = nullptr);

// ---- file-level commands -------------------------------------------------

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::uint64_t> eval_seed;
  std::optional<std::string> output_dir;
};

/// Applies overrides and resolves a relative output_dir against
/// $IAAT_OUTPUT_ROOT when it is set.
ExperimentConfig apply_overrides(ExperimentConfig cfg, const Overrides& o);

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::filesystem::path memory_dir;  // empty unless iaat mode
};

/// Writes model.ckpt, train_log.csv, config.json and (iaat)
/// memory/epoch_NNNN.csv into `dir`.
TrainOutputs write_training(const ExperimentConfig& cfg, const TrainedRun& run,
                            const std::filesystem::path& dir);

/// Trains into the config's output directory. When a transfer protocol is
/// configured the surrogate is trained too, into surrogate/.
TrainOutputs cmd_train(const std::filesystem::path& config_path, const Overrides& o = {});

/// Evaluates a checkpoint; writes report.json and report.csv next to it.
/// Without an explicit surrogate, surrogate/model.ckpt beside the checkpoint
/// is used when present.
std::filesystem::path cmd_evaluate(const std::filesystem::path& checkpoint,
                                   const std::filesystem::path& config_path,
                                   const Overrides& o = {},
                                   const std::optional<std::filesystem::path>& surrogate = {});

struct SweepOutputs {
  std::vector<std::filesystem::path> reports;  // fixed radii in order, then IAAT
  std::filesystem::path tradeoff_svg;
  std::filesystem::path sweep_svg;
  int runs_trained = 0;  // runs not found on disk
};

/// Fixed-radius adversarial training for each radius in `eps_list`, plus the
/// config's IAAT run, each evaluated and stored under runs/<fingerprint>.
/// Finished runs (report present with a matching fingerprint) are skipped.
SweepOutputs cmd_sweep(const std::filesystem::path& config_path,
                       const std::vector<double>& eps_list, const Overrides& o = {});

/// Shared main(): parses arguments and maps errors to exit codes
/// (0 ok, 2 config, 3 numeric, 4 I/O).
int run_cli(int argc, char** argv);

}  // namespace iaat::experiment
