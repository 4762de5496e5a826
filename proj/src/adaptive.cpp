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

#include "iaat/adaptive/iaat.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "iaat/seed.hpp"

namespace iaat::adaptive {
namespace {

std::vector<int> gather_labels(const data::LabeledDataset& d, std::span<const Index> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(d.labels[static_cast<std::size_t>(i)]);
  return out;
}

nn::MatrixXd gather_inputs(const data::LabeledDataset& d, std::span<const Index> idx) {
  nn::MatrixXd out(d.inputs.rows(), static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Index>(k)) = d.inputs.col(idx[k]);
  return out;
}

void check_dataset(const data::LabeledDataset& d, int batch_size) {
  if (d.size() == 0) throw ConfigError("training set is empty");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

}  // namespace

EpsilonMemory EpsilonMemory::uniform(Index size, double value, double min, double max) {
  if (!(min <= value && value <= max)) {
    throw ConfigError("initial radius lies outside the memory bounds");
  }
  EpsilonMemory mem;
  mem.current.assign(static_cast<std::size_t>(size), value);
  mem.min = min;
  mem.max = max;
  return mem;
}

void EpsilonMemory::check_bounds() const {
  for (double e : current) {
    if (!(e >= min && e <= max)) throw std::logic_error("epsilon memory entry out of bounds");
  }
}

void IaatConfig::validate() const {
  if (epochs < 1) throw ConfigError("iaat.epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) {
    throw ConfigError("iaat.warmup_epochs must satisfy 0 <= warmup < epochs");
  }
  if (!(gamma > 0.0)) throw ConfigError("iaat.gamma must be positive");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("iaat.beta must lie in (0, 1]");
  if (!(eps_min >= 0.0 && eps_min <= eps_max)) {
    throw ConfigError("iaat radius bounds must satisfy 0 <= eps_min <= eps_max");
  }
  if (!(warmup_epsilon >= eps_min && warmup_epsilon <= eps_max)) {
    throw ConfigError("iaat.warmup_epsilon must lie inside [eps_min, eps_max]");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  selection_attack.validate();
  training_attack.validate();
}

double smooth_epsilon(double prev, double raw, const IaatConfig& cfg) {
  const double smoothed = (1.0 - cfg.beta) * prev + cfg.beta * raw;
  return std::clamp(smoothed, cfg.eps_min, cfg.eps_max);
}

std::vector<double> select_epsilons(const nn::Network& net, const nn::MatrixXd& x,
                                    std::span<const int> labels, std::span<const double> prev,
                                    const IaatConfig& cfg, std::uint64_t seed) {
  const Index n = x.cols();
  if (static_cast<Index>(prev.size()) != n || static_cast<Index>(labels.size()) != n) {
    throw ShapeError("select_epsilons: one previous radius and label per column");
  }
  std::vector<double> up(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i) up[i] = std::max(prev[i] + cfg.gamma, 0.0);

  const auto at_up = attacks::attack_batch(net, x, labels, up, cfg.selection_attack,
                                           derive_seed(seed, {kProbeUp}));

  // Only samples that broke at prev + gamma are probed again at prev.
  std::vector<Index> retry;
  for (Index i = 0; i < n; ++i) {
    if (at_up.success[static_cast<std::size_t>(i)]) retry.push_back(i);
  }
  std::vector<char> robust_at_prev(static_cast<std::size_t>(n), 0);
  if (!retry.empty()) {
    nn::MatrixXd xr(x.rows(), static_cast<Index>(retry.size()));
    std::vector<int> lr;
    std::vector<double> er;
    for (std::size_t k = 0; k < retry.size(); ++k) {
      const auto i = static_cast<std::size_t>(retry[k]);
      xr.col(static_cast<Index>(k)) = x.col(retry[k]);
      lr.push_back(labels[i]);
      er.push_back(std::max(prev[i], 0.0));
    }
    const auto at_prev = attacks::attack_batch(net, xr, lr, er, cfg.selection_attack,
                                               derive_seed(seed, {kProbeStay}));
    for (std::size_t k = 0; k < retry.size(); ++k) {
      robust_at_prev[static_cast<std::size_t>(retry[k])] = at_prev.success[k] ? 0 : 1;
    }
  }

  std::vector<double> out(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i) {
    double raw = 0.0;
    if (!at_up.success[i]) {
      raw = prev[i] + cfg.gamma;
    } else if (robust_at_prev[i]) {
      raw = prev[i];
    } else {
      raw = std::max(prev[i] - cfg.gamma, cfg.eps_min);
    }
    out[i] = smooth_epsilon(prev[i], raw, cfg);
  }
  return out;
}

double select_epsilon(const nn::Network& net, const nn::VectorXd& x, int label, double prev,
                      const IaatConfig& cfg, std::uint64_t seed) {
  const nn::MatrixXd batch = x;
  const int labels[1] = {label};
  const double prevs[1] = {prev};
  return select_epsilons(net, batch, labels, prevs, cfg, seed).front();
}

std::vector<Index> epoch_order(Index n, int epoch, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(derive_seed(seed, {kShuffle, static_cast<std::uint64_t>(epoch)}));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

EpochStats train_epoch_iaat(nn::Network& net, nn::Sgd<double>& opt,
                            const data::LabeledDataset& dataset, EpsilonMemory& mem,
                            const IaatConfig& cfg, int epoch, std::uint64_t seed) {
  cfg.validate();
  check_dataset(dataset, cfg.batch_size);
  if (mem.size() != dataset.size()) {
    throw ConfigError("epsilon memory has " + std::to_string(mem.size()) +
                      " entries but the training set has " + std::to_string(dataset.size()));
  }
  const bool warmup = epoch < cfg.warmup_epochs;
  const auto order = epoch_order(dataset.size(), epoch, seed);

  EpochStats stats;
  stats.epoch = epoch;
  stats.min_applied_eps = std::numeric_limits<double>::infinity();
  stats.max_applied_eps = -std::numeric_limits<double>::infinity();
  long double eps_sum = 0.0L;
  double loss_sum = 0.0;
  Index correct_total = 0;
  Index batches = 0;

  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
    const std::span<const Index> idx(order.data() + start, len);
    const auto b = static_cast<std::uint64_t>(batches);
    const nn::MatrixXd x = gather_inputs(dataset, idx);
    const std::vector<int> labels = gather_labels(dataset, idx);

    std::vector<double> eps(len, cfg.warmup_epsilon);
    if (!warmup) {
      std::vector<double> prev(len);
      for (std::size_t k = 0; k < len; ++k) prev[k] = mem.current[static_cast<std::size_t>(idx[k])];
      eps = select_epsilons(net, x, labels, prev,
                            cfg, derive_seed(seed, {static_cast<std::uint64_t>(epoch), b}));
      for (std::size_t k = 0; k < len; ++k) {
        stats.max_memory_drift = std::max(stats.max_memory_drift, std::abs(eps[k] - prev[k]));
        mem.current[static_cast<std::size_t>(idx[k])] = eps[k];
      }
    }

    const auto adv = attacks::attack_batch(
        net, x, labels, eps, cfg.training_attack,
        derive_seed(seed, {kTrainAttack, static_cast<std::uint64_t>(epoch), b}));

    // S+ (clean-correct) trains on the adversarial example, S- on the clean one.
    const auto clean_pred = nn::predict(net, x);
    nn::MatrixXd mixed = x;
    for (std::size_t k = 0; k < len; ++k) {
      if (clean_pred[k] == labels[k]) {
        mixed.col(static_cast<Index>(k)) = adv.adversarial.col(static_cast<Index>(k));
        ++correct_total;
      }
    }
    const auto lg = nn::loss_and_gradients(net, mixed, labels, nn::Reduction::mean);
    opt.step(net, lg.grads.params, epoch);

    for (double e : eps) {
      eps_sum += e;
      stats.min_applied_eps = std::min(stats.min_applied_eps, e);
      stats.max_applied_eps = std::max(stats.max_applied_eps, e);
    }
    loss_sum += lg.loss;
    ++batches;
  }
  const auto n = static_cast<double>(dataset.size());
  stats.loss = loss_sum / static_cast<double>(batches);
  stats.clean_accuracy = static_cast<double>(correct_total) / n;
  stats.mean_applied_eps = static_cast<double>(eps_sum / static_cast<long double>(n));
  return stats;
}

EpochStats train_epoch_fixed(nn::Network& net, nn::Sgd<double>& opt,
                             const data::LabeledDataset& dataset, double epsilon,
                             const FixedConfig& cfg, int epoch, std::uint64_t seed) {
  check_dataset(dataset, cfg.batch_size);
  const attacks::AttackSpec attack = cfg.attack.with_epsilon(epsilon);
  attack.validate();
  const auto order = epoch_order(dataset.size(), epoch, seed);

  EpochStats stats;
  stats.epoch = epoch;
  stats.min_applied_eps = stats.max_applied_eps = stats.mean_applied_eps = epsilon;
  double loss_sum = 0.0;
  Index correct_total = 0;
  Index batches = 0;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
    const std::span<const Index> idx(order.data() + start, len);
    const nn::MatrixXd x = gather_inputs(dataset, idx);
    const std::vector<int> labels = gather_labels(dataset, idx);

    const auto clean_pred = nn::predict(net, x);
    for (std::size_t k = 0; k < len; ++k) correct_total += clean_pred[k] == labels[k] ? 1 : 0;

    nn::MatrixXd inputs = x;
    if (epsilon > 0.0) {
      inputs = attacks::attack_batch(
                   net, x, labels, attack,
                   derive_seed(seed, {kTrainAttack, static_cast<std::uint64_t>(epoch),
                                      static_cast<std::uint64_t>(batches)}))
                   .adversarial;
    }
    const auto lg = nn::loss_and_gradients(net, inputs, labels, nn::Reduction::mean);
    opt.step(net, lg.grads.params, epoch);
    loss_sum += lg.loss;
    ++batches;
  }
  stats.loss = loss_sum / static_cast<double>(batches);
  stats.clean_accuracy = static_cast<double>(correct_total) / static_cast<double>(dataset.size());
  return stats;
}

std::string memory_to_csv(const std::vector<double>& eps) {
  std::string out = "sample_index,epsilon_255\n";
  for (std::size_t i = 0; i < eps.size(); ++i) out += fmt::format("{},{}\n", i, eps[i] * 255.0);
  return out;
}

std::vector<double> memory_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line) || line != "sample_index,epsilon_255") {
    throw FormatError("memory CSV must start with header sample_index,epsilon_255", 0);
  }
  offset += line.size() + 1;
  std::vector<double> eps;
  std::vector<char> seen;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    const auto comma = line.find(',');
    std::size_t used_i = 0;
    std::size_t used_e = 0;
    long long index = -1;
    double value = 0.0;
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      index = std::stoll(line.substr(0, comma), &used_i);
      value = std::stod(line.substr(comma + 1), &used_e);
    } catch (const std::exception&) {
      throw FormatError("malformed memory CSV row '" + line + "'", offset);
    }
    if (used_i != comma || used_e != line.size() - comma - 1 || index < 0 || !(value >= 0.0)) {
      throw FormatError("malformed memory CSV row '" + line + "'", offset);
    }
    const auto i = static_cast<std::size_t>(index);
    if (i >= eps.size()) {
      eps.resize(i + 1, 0.0);
      seen.resize(i + 1, 0);
    }
    if (seen[i]) throw FormatError("duplicate sample index in memory CSV", offset);
    seen[i] = 1;
    eps[i] = value / 255.0;
    offset += line.size() + 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw FormatError("memory CSV sample indices are not dense", offset);
  }
  return eps;
}

}  // namespace iaat::adaptive
