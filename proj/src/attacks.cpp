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

#include "iaat/attacks/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iaat/seed.hpp"

namespace iaat::attacks {

AttackSpec AttackSpec::fgsm(double epsilon) {
  AttackSpec s;
  s.family = Family::fgsm;
  s.steps = 1;
  s.step_size = std::nullopt;
  s.epsilon = epsilon;
  s.restarts = 1;
  s.random_init = false;
  s.validate();
  return s;
}

AttackSpec AttackSpec::pgd(int steps, std::optional<double> step_size, double epsilon,
                           int restarts) {
  AttackSpec s;
  s.steps = steps;
  s.step_size = step_size;
  s.epsilon = epsilon;
  s.restarts = restarts;
  s.validate();
  return s;
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("attack epsilon must be a finite nonnegative number");
  }
  if (restarts < 1) throw ConfigError("attack restarts must be >= 1");
  if (steps < 1) throw ConfigError("attack steps must be >= 1");
  if (step_size && !(*step_size > 0.0)) throw ConfigError("attack step size must be positive");
  if (family == Family::fgsm) {
    if (steps != 1) throw ConfigError("FGSM takes exactly one step");
    if (step_size && *step_size != epsilon) {
      throw ConfigError("FGSM step size must equal epsilon");
    }
    if (random_init) throw ConfigError("FGSM starts from the clean input");
  }
}

double AttackSpec::step_for(double eps) const {
  if (family == Family::fgsm) return eps;
  if (step_size) return *step_size;
  return 2.5 * eps / static_cast<double>(steps);
}

AttackSpec AttackSpec::with_epsilon(double eps) const {
  AttackSpec s = *this;
  s.epsilon = eps;
  if (family == Family::fgsm) s.step_size = std::nullopt;
  return s;
}

std::string AttackSpec::name() const {
  std::string n = family == Family::fgsm ? "FGSM" : "PGD" + std::to_string(steps) + "x" +
                                                        std::to_string(restarts);
  if (targeted) n += "-targeted";
  return n;
}

nlohmann::json to_json(const AttackSpec& spec) {
  nlohmann::json j;
  j["family"] = spec.family == Family::fgsm ? "fgsm" : "pgd";
  j["steps"] = spec.steps;
  if (spec.step_size) {
    j["step_size_255"] = *spec.step_size * 255.0;
  } else {
    j["step_size_255"] = "auto";
  }
  j["epsilon_255"] = spec.epsilon * 255.0;
  j["restarts"] = spec.restarts;
  j["random_init"] = spec.random_init;
  j["targeted"] = spec.targeted;
  return j;
}

namespace {

double json_255(const nlohmann::json& v) {
  if (v.is_string()) return parse_epsilon_255(v.get<std::string>());
  return v.get<double>() / 255.0;
}

}  // namespace

AttackSpec attack_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("attack spec must be a JSON object");
  static const char* const kKeys[] = {"family",   "steps",       "step_size_255", "epsilon_255",
                                      "restarts", "random_init", "targeted"};
  for (const auto& item : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), item.key()) == std::end(kKeys)) {
      throw ConfigError("unknown attack field '" + item.key() + "'");
    }
  }
  try {
    AttackSpec s;
    const std::string family = j.value("family", std::string("pgd"));
    if (family == "fgsm") {
      s.family = Family::fgsm;
    } else if (family == "pgd") {
      s.family = Family::pgd;
    } else {
      throw ConfigError("attack.family must be 'fgsm' or 'pgd', got '" + family + "'");
    }
    s.epsilon = j.contains("epsilon_255") ? json_255(j.at("epsilon_255")) : s.epsilon;
    if (s.family == Family::fgsm) {
      s.steps = j.value("steps", 1);
      s.step_size = std::nullopt;
      s.random_init = j.value("random_init", false);
    } else {
      s.steps = j.value("steps", s.steps);
      if (j.contains("step_size_255")) {
        const auto& st = j.at("step_size_255");
        if (st.is_string() && st.get<std::string>() == "auto") {
          s.step_size = std::nullopt;
        } else {
          s.step_size = json_255(st);
        }
      }
      s.random_init = j.value("random_init", true);
    }
    s.restarts = j.value("restarts", 1);
    s.targeted = j.value("targeted", false);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed attack spec: ") + e.what());
  }
}

double parse_epsilon_255(const std::string& text) {
  std::string body = text;
  const auto slash = body.find('/');
  if (slash != std::string::npos) {
    if (body.substr(slash) != "/255") {
      throw ConfigError("radius '" + text + "' must be written in /255 units");
    }
    body = body.substr(0, slash);
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(body, &used);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse radius '" + text + "'");
  }
  if (used != body.size() || !(v >= 0.0) || !std::isfinite(v)) {
    throw ConfigError("cannot parse radius '" + text + "'");
  }
  return v / 255.0;
}

BatchAttackResult attack_batch(const nn::Network& net, const MatrixXd& x,
                               std::span<const int> labels, std::span<const double> epsilons,
                               const AttackSpec& spec, std::uint64_t seed,
                               std::span<const int> targets) {
  spec.validate();
  const Index n = x.cols();
  if (static_cast<Index>(labels.size()) != n || static_cast<Index>(epsilons.size()) != n) {
    throw ShapeError("attack_batch: labels/epsilons must have one entry per column");
  }
  if (spec.targeted && static_cast<Index>(targets.size()) != n) {
    throw ShapeError("targeted attack needs one target per column");
  }
  const Eigen::Map<const VectorXd> eps(epsilons.data(), n);
  if ((eps.array() < 0.0).any() || !eps.allFinite()) {
    throw ConfigError("attack radii must be finite and nonnegative");
  }
  VectorXd alpha(n);
  for (Index i = 0; i < n; ++i) alpha(i) = spec.step_for(eps(i));

  // Untargeted: ascend CE(label). Targeted: descend CE(target).
  const std::span<const int> objective_labels = spec.targeted ? targets : labels;
  const double direction = spec.targeted ? -1.0 : 1.0;

  BatchAttackResult best{x, std::vector<char>(static_cast<std::size_t>(n), 0),
                         VectorXd::Constant(n, -std::numeric_limits<double>::infinity())};
  VectorXd best_objective = VectorXd::Constant(n, -std::numeric_limits<double>::infinity());

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  for (int r = 0; r < spec.restarts; ++r) {
    MatrixXd adv = x;
    if (spec.random_init) {
      // Draw for every coordinate regardless of radius so the stream layout
      // does not depend on the radii.
      for (Index c = 0; c < n; ++c) {
        for (Index k = 0; k < x.rows(); ++k) adv(k, c) = x(k, c) + unit(rng) * eps(c);
      }
      adv = adv.cwiseMax(0.0).cwiseMin(1.0);
    }
    for (int step = 0; step < spec.steps; ++step) {
      const auto lg = nn::loss_and_gradients(net, adv, objective_labels, nn::Reduction::sum);
      const MatrixXd signs = lg.grads.input.array().sign().matrix();
      for (Index c = 0; c < n; ++c) {
        auto col = adv.col(c);
        col += (direction * alpha(c)) * signs.col(c);
        col = (col - x.col(c)).cwiseMax(-eps(c)).cwiseMin(eps(c)) + x.col(c);
      }
      adv = adv.cwiseMax(0.0).cwiseMin(1.0);
    }
    const MatrixXd logits = nn::forward(net, adv);
    const auto pred = nn::argmax_columns(logits);
    const auto ce = nn::batch_cross_entropy(logits, objective_labels);
    for (Index c = 0; c < n; ++c) {
      const auto i = static_cast<std::size_t>(c);
      if (best.success[i]) continue;
      const bool success = spec.targeted ? pred[i] == targets[i] : pred[i] != labels[i];
      const double objective = direction * ce.values(c);
      if (success || r == 0 || objective > best_objective(c)) {
        best.adversarial.col(c) = adv.col(c);
        best.success[i] = success ? 1 : 0;
        best.final_loss(c) = ce.values(c);
        best_objective(c) = objective;
      }
    }
  }
  return best;
}

BatchAttackResult attack_batch(const nn::Network& net, const MatrixXd& x,
                               std::span<const int> labels, const AttackSpec& spec,
                               std::uint64_t seed, std::span<const int> targets) {
  const std::vector<double> eps(static_cast<std::size_t>(x.cols()), spec.epsilon);
  return attack_batch(net, x, labels, eps, spec, seed, targets);
}

AttackResult pgd_attack(const nn::Network& net, const VectorXd& x, int label,
                        const AttackSpec& spec, std::uint64_t seed, std::optional<int> target) {
  if (spec.targeted && !target) throw ConfigError("targeted attack requires a target class");
  const MatrixXd batch = x;
  const int labels[1] = {label};
  const int targets[1] = {target.value_or(label)};
  auto r = attack_batch(net, batch, labels, spec, seed,
                        spec.targeted ? std::span<const int>(targets) : std::span<const int>());
  AttackResult out;
  out.adversarial_input = nn::Tensor({1, x.size()}, r.adversarial.col(0));
  out.success = r.success[0] != 0;
  out.final_loss = r.final_loss(0);
  return out;
}

int sample_random_target(int label, int num_classes, std::mt19937_64& rng) {
  if (num_classes < 2) throw ConfigError("random targets need at least two classes");
  std::uniform_int_distribution<int> pick(0, num_classes - 2);
  const int t = pick(rng);
  return t >= label ? t + 1 : t;
}

RobustnessOutcome evaluate_attack(const nn::Network& target_net, const nn::Network& source,
                                  const data::LabeledDataset& dataset, const AttackSpec& spec,
                                  std::uint64_t seed) {
  const Index n = dataset.size();
  RobustnessOutcome out;
  out.clean_correct.assign(static_cast<std::size_t>(n), 0);
  out.robust.assign(static_cast<std::size_t>(n), 0);
  if (n == 0) return out;

  std::vector<int> targets;
  if (spec.targeted) {
    std::mt19937_64 rng(derive_seed(seed, {0x7a7a}));
    targets.reserve(static_cast<std::size_t>(n));
    for (int y : dataset.labels) targets.push_back(sample_random_target(y, dataset.num_classes, rng));
  }

  Index clean = 0;
  Index robust = 0;
  for (Index start = 0, chunk = 0; start < n; start += kEvalChunk, ++chunk) {
    const Index len = std::min(kEvalChunk, n - start);
    const MatrixXd x = dataset.inputs.middleCols(start, len);
    const auto labels = dataset.label_span().subspan(static_cast<std::size_t>(start),
                                                     static_cast<std::size_t>(len));
    const auto chunk_targets =
        spec.targeted ? std::span<const int>(targets).subspan(static_cast<std::size_t>(start),
                                                              static_cast<std::size_t>(len))
                      : std::span<const int>();
    const auto clean_pred = nn::predict(target_net, x);
    const auto adv = attack_batch(source, x, labels, spec,
                                  derive_seed(seed, {static_cast<std::uint64_t>(chunk)}),
                                  chunk_targets);
    const auto adv_pred = nn::predict(target_net, adv.adversarial);
    for (Index c = 0; c < len; ++c) {
      const auto i = static_cast<std::size_t>(c);
      const auto global = static_cast<std::size_t>(start + c);
      const bool correct = clean_pred[i] == labels[i];
      const bool fooled =
          spec.targeted ? adv_pred[i] == chunk_targets[i] : adv_pred[i] != labels[i];
      out.clean_correct[global] = correct ? 1 : 0;
      out.robust[global] = correct && !fooled ? 1 : 0;
      clean += correct ? 1 : 0;
      robust += correct && !fooled ? 1 : 0;
    }
  }
  out.natural_accuracy = static_cast<double>(clean) / static_cast<double>(n);
  out.robust_accuracy = static_cast<double>(robust) / static_cast<double>(n);
  return out;
}

double evaluate_robust_accuracy(const nn::Network& net, const data::LabeledDataset& dataset,
                                const AttackSpec& spec, std::uint64_t seed) {
  return evaluate_attack(net, net, dataset, spec, seed).robust_accuracy;
}

}  // namespace iaat::attacks
