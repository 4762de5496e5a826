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

#include "iaat/experiment/experiment.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "iaat/data/generators.hpp"
#include "iaat/report/report.hpp"
#include "iaat/seed.hpp"

namespace iaat::experiment {
namespace {

using nlohmann::json;

enum SeedTag : std::uint64_t { kTrainSet = 1, kTestSet = 2, kInit = 3, kTrain = 4 };

// Radii are stored in /255 units on disk, rounded so that a value survives
// a pixel-unit round trip unchanged.
double to255(double v) { return std::round(v * 255.0 * 1e9) / 1e9; }

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config field '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown config field '" + (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

template <typename T>
T field(const json& j, const std::string& section, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config field '" + section + "." + key + "': " + e.what());
  }
}

double field_255(const json& j, const std::string& section, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (v.is_string()) return attacks::parse_epsilon_255(v.get<std::string>());
  if (!v.is_number()) throw ConfigError("config field '" + section + "." + key + "' must be a number");
  return v.get<double>() / 255.0;
}

attacks::AttackSpec attack_field(const json& j, const std::string& where, double default_eps) {
  json a = j;
  if (!a.is_object()) throw ConfigError("config field '" + where + "' must be an object");
  if (!a.contains("epsilon_255")) a["epsilon_255"] = default_eps * 255.0;
  try {
    return attacks::attack_spec_from_json(a);
  } catch (const ConfigError& e) {
    throw ConfigError("config field '" + where + "': " + e.what());
  }
}

json attack_json(const attacks::AttackSpec& s) {
  json j = attacks::to_json(s);
  j["epsilon_255"] = to255(s.epsilon);
  if (s.step_size) j["step_size_255"] = to255(*s.step_size);
  return j;
}

TrainingMode mode_from_string(const std::string& m) {
  if (m == "clean") return TrainingMode::clean;
  if (m == "fixed_eps") return TrainingMode::fixed_eps;
  if (m == "iaat") return TrainingMode::iaat;
  throw ConfigError("config field 'mode' must be clean, fixed_eps or iaat (got '" + m + "')");
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("failed writing " + p.string());
}

void make_dirs(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

std::vector<attacks::AttackSpec> default_protocols(double eps) {
  return {attacks::AttackSpec::pgd(10, std::nullopt, eps, 3),
          attacks::AttackSpec::pgd(50, std::nullopt, eps, 2)};
}

}  // namespace

std::string to_string(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::clean: return "clean";
    case TrainingMode::fixed_eps: return "fixed_eps";
    case TrainingMode::iaat: return "iaat";
  }
  return "?";
}

std::string ExperimentConfig::label() const {
  switch (mode) {
    case TrainingMode::clean: return "clean";
    case TrainingMode::fixed_eps: return fmt::format("fixed {}/255", to255(epsilon));
    case TrainingMode::iaat: return iaat.warmup_epochs > 0 ? "IAAT" : "IAAT (no warmup)";
  }
  return "?";
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "", {"name", "dataset", "model", "mode", "epsilon_255", "epochs", "batch_size",
                     "optimizer", "training_attack", "iaat", "evaluation", "seeds", "output_dir"});
  ExperimentConfig cfg;
  cfg.name = field<std::string>(j, "", "name", cfg.name);
  cfg.output_dir = field<std::string>(j, "", "output_dir", cfg.output_dir);
  cfg.mode = mode_from_string(field<std::string>(j, "", "mode", "iaat"));
  cfg.epsilon = field_255(j, "", "epsilon_255", cfg.epsilon);
  cfg.epochs = field<int>(j, "", "epochs", cfg.epochs);
  cfg.batch_size = field<int>(j, "", "batch_size", cfg.batch_size);
  if (cfg.epochs < 1) throw ConfigError("config field 'epochs' must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("config field 'batch_size' must be >= 1");
  if (!(cfg.epsilon >= 0.0)) throw ConfigError("config field 'epsilon_255' must be >= 0");

  const json ds = j.value("dataset", json::object());
  check_keys(ds, "dataset", {"kind", "train_size", "test_size", "noise", "overlap", "dim",
                             "margin_lo_255", "margin_hi_255", "train_images", "train_labels",
                             "test_images", "test_labels"});
  auto& d = cfg.dataset;
  d.kind = field<std::string>(ds, "dataset", "kind", d.kind);
  d.train_size = field<Index>(ds, "dataset", "train_size", d.train_size);
  d.test_size = field<Index>(ds, "dataset", "test_size", d.test_size);
  d.noise = field<double>(ds, "dataset", "noise", d.noise);
  d.overlap = field<double>(ds, "dataset", "overlap", d.overlap);
  d.dim = field<Index>(ds, "dataset", "dim", d.dim);
  d.margin_lo = field_255(ds, "dataset", "margin_lo_255", d.margin_lo);
  d.margin_hi = field_255(ds, "dataset", "margin_hi_255", d.margin_hi);
  d.train_images = field<std::string>(ds, "dataset", "train_images", "");
  d.train_labels = field<std::string>(ds, "dataset", "train_labels", "");
  d.test_images = field<std::string>(ds, "dataset", "test_images", "");
  d.test_labels = field<std::string>(ds, "dataset", "test_labels", "");
  if (d.kind != "moons" && d.kind != "linear_oracle" && d.kind != "idx") {
    throw ConfigError("config field 'dataset.kind' must be moons, linear_oracle or idx");
  }
  const Index min_size = d.kind == "idx" ? 0 : 1;  // idx: 0 keeps the whole file
  if (d.train_size < min_size || d.test_size < min_size) {
    throw ConfigError(fmt::format(
        "config fields 'dataset.train_size' and 'dataset.test_size' must be >= {}", min_size));
  }

  Index input_dim = 2;
  nn::Shape input_shape = nn::Shape::flat(2);
  if (d.kind == "linear_oracle") input_shape = nn::Shape::flat(d.dim);

  const json model = j.value("model", json::object());
  check_keys(model, "model", {"hidden", "arch"});
  try {
    if (model.contains("arch")) {
      cfg.arch = nn::arch_from_json(model.at("arch"));
    } else {
      input_dim = input_shape.size();
      const auto hidden = field<std::vector<Index>>(model, "model", "hidden", {32, 32});
      cfg.arch = nn::mlp(input_dim, hidden, 2);
      if (d.kind == "idx") {
        throw ConfigError("config field 'model.arch' is required for idx datasets");
      }
    }
    nn::Network probe(cfg.arch);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("config field 'model': ") + e.what());
  }

  const json opt = j.value("optimizer", json::object());
  check_keys(opt, "optimizer", {"learning_rate", "weight_decay", "decay_steps", "decay_factor", "momentum"});
  auto& o = cfg.optimizer;
  o.learning_rate = field<double>(opt, "optimizer", "learning_rate", o.learning_rate);
  o.weight_decay = field<double>(opt, "optimizer", "weight_decay", o.weight_decay);
  o.decay_steps = field<std::vector<int>>(opt, "optimizer", "decay_steps", o.decay_steps);
  o.decay_factor = field<double>(opt, "optimizer", "decay_factor", o.decay_factor);
  o.momentum = field<double>(opt, "optimizer", "momentum", o.momentum);
  try {
    o.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config field 'optimizer': ") + e.what());
  }

  cfg.training_attack = attack_field(j.value("training_attack", json::object()), "training_attack",
                                     8.0 / 255.0);

  const json ia = j.value("iaat", json::object());
  check_keys(ia, "iaat", {"warmup_epochs", "warmup_epsilon_255", "gamma_255", "beta", "eps_min_255",
                          "eps_max_255", "selection_attack"});
  auto& c = cfg.iaat;
  c.epochs = cfg.epochs;
  c.batch_size = cfg.batch_size;
  c.warmup_epochs = field<int>(ia, "iaat", "warmup_epochs", c.warmup_epochs);
  c.warmup_epsilon = field_255(ia, "iaat", "warmup_epsilon_255", c.warmup_epsilon);
  c.gamma = field_255(ia, "iaat", "gamma_255", c.gamma);
  c.beta = field<double>(ia, "iaat", "beta", c.beta);
  c.eps_min = field_255(ia, "iaat", "eps_min_255", c.eps_min);
  c.eps_max = field_255(ia, "iaat", "eps_max_255", c.eps_max);
  c.training_attack = cfg.training_attack;
  c.selection_attack = ia.contains("selection_attack")
                           ? attack_field(ia.at("selection_attack"), "iaat.selection_attack",
                                          cfg.training_attack.epsilon)
                           : cfg.training_attack;
  if (cfg.mode == TrainingMode::iaat) {
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config field 'iaat': ") + e.what());
    }
  }

  const json ev = j.value("evaluation", json::object());
  check_keys(ev, "evaluation", {"reference_epsilon_255", "protocols", "sweep_255", "sweep_attack",
                                "corruptions", "transfer", "surrogate_seed_offset", "histogram_bins"});
  auto& e = cfg.evaluation;
  e.reference_epsilon = field_255(ev, "evaluation", "reference_epsilon_255", e.reference_epsilon);
  if (ev.contains("protocols")) {
    const json& ps = ev.at("protocols");
    if (!ps.is_array() || ps.empty()) {
      throw ConfigError("config field 'evaluation.protocols' must be a non-empty array");
    }
    for (std::size_t k = 0; k < ps.size(); ++k) {
      e.protocols.push_back(
          attack_field(ps[k], fmt::format("evaluation.protocols[{}]", k), e.reference_epsilon));
    }
  } else {
    e.protocols = default_protocols(e.reference_epsilon);
  }
  std::set<std::string> names;
  for (const auto& p : e.protocols) {
    if (!names.insert(p.name()).second) {
      throw ConfigError("config field 'evaluation.protocols': duplicate protocol " + p.name());
    }
  }
  if (ev.contains("sweep_255")) {
    for (const auto& v : ev.at("sweep_255")) {
      const double eps = v.is_string() ? attacks::parse_epsilon_255(v.get<std::string>())
                                       : v.get<double>() / 255.0;
      if (!(eps >= 0.0)) throw ConfigError("config field 'evaluation.sweep_255' entries must be >= 0");
      e.sweep.push_back(eps);
    }
  } else {
    for (int k = 0; k <= 16; k += 2) e.sweep.push_back(k / 255.0);
  }
  std::sort(e.sweep.begin(), e.sweep.end());
  e.sweep_attack = ev.contains("sweep_attack")
                       ? attack_field(ev.at("sweep_attack"), "evaluation.sweep_attack", e.reference_epsilon)
                       : attacks::AttackSpec::pgd(20, std::nullopt, e.reference_epsilon, 1);
  e.corruptions = field<bool>(ev, "evaluation", "corruptions", e.corruptions);
  if (ev.contains("transfer") && !ev.at("transfer").is_null()) {
    e.transfer = attack_field(ev.at("transfer"), "evaluation.transfer", e.reference_epsilon);
  }
  e.surrogate_seed_offset = field<std::uint64_t>(ev, "evaluation", "surrogate_seed_offset", e.surrogate_seed_offset);
  e.histogram_bins = field<int>(ev, "evaluation", "histogram_bins", e.histogram_bins);
  if (e.histogram_bins < 1) throw ConfigError("config field 'evaluation.histogram_bins' must be >= 1");

  const json seeds = j.value("seeds", json::object());
  check_keys(seeds, "seeds", {"data", "model", "eval"});
  cfg.seeds.data = field<std::uint64_t>(seeds, "seeds", "data", cfg.seeds.data);
  cfg.seeds.model = field<std::uint64_t>(seeds, "seeds", "model", cfg.seeds.model);
  cfg.seeds.eval = field<std::uint64_t>(seeds, "seeds", "eval", cfg.seeds.eval);

  if (cfg.mode == TrainingMode::fixed_eps && cfg.epsilon == 0.0) cfg.mode = TrainingMode::clean;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

namespace {

json training_json(const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  const auto& d = cfg.dataset;
  json ds{{"kind", d.kind}, {"train_size", d.train_size}, {"test_size", d.test_size}};
  if (d.kind == "moons") {
    ds["noise"] = d.noise;
    ds["overlap"] = d.overlap;
  } else if (d.kind == "linear_oracle") {
    ds["dim"] = d.dim;
    ds["margin_lo_255"] = to255(d.margin_lo);
    ds["margin_hi_255"] = to255(d.margin_hi);
  } else {
    ds["train_images"] = d.train_images;
    ds["train_labels"] = d.train_labels;
    ds["test_images"] = d.test_images;
    ds["test_labels"] = d.test_labels;
  }
  j["dataset"] = std::move(ds);
  j["model"] = {{"arch", nn::arch_to_json(cfg.arch)}};
  j["mode"] = to_string(cfg.mode);
  if (cfg.mode == TrainingMode::fixed_eps) j["epsilon_255"] = to255(cfg.epsilon);
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  const auto& o = cfg.optimizer;
  j["optimizer"] = {{"learning_rate", o.learning_rate}, {"weight_decay", o.weight_decay},
                    {"decay_steps", o.decay_steps},     {"decay_factor", o.decay_factor},
                    {"momentum", o.momentum}};
  if (cfg.mode != TrainingMode::clean) j["training_attack"] = attack_json(cfg.training_attack);
  if (cfg.mode == TrainingMode::iaat) {
    const auto& c = cfg.iaat;
    j["iaat"] = {{"warmup_epochs", c.warmup_epochs},
                 {"warmup_epsilon_255", to255(c.warmup_epsilon)},
                 {"gamma_255", to255(c.gamma)},
                 {"beta", c.beta},
                 {"eps_min_255", to255(c.eps_min)},
                 {"eps_max_255", to255(c.eps_max)},
                 {"selection_attack", attack_json(c.selection_attack)}};
  }
  j["seeds"] = {{"data", cfg.seeds.data}};
  return j;
}

}  // namespace

json to_json(const ExperimentConfig& cfg) {
  json j = training_json(cfg);
  // Canonical form keeps every section so the file round-trips.
  if (!j.contains("training_attack")) j["training_attack"] = attack_json(cfg.training_attack);
  if (!j.contains("iaat")) {
    const auto& c = cfg.iaat;
    j["iaat"] = {{"warmup_epochs", c.warmup_epochs},
                 {"warmup_epsilon_255", to255(c.warmup_epsilon)},
                 {"gamma_255", to255(c.gamma)},
                 {"beta", c.beta},
                 {"eps_min_255", to255(c.eps_min)},
                 {"eps_max_255", to255(c.eps_max)},
                 {"selection_attack", attack_json(c.selection_attack)}};
  }
  const auto& e = cfg.evaluation;
  json protocols = json::array();
  for (const auto& p : e.protocols) protocols.push_back(attack_json(p));
  json sweep = json::array();
  for (double v : e.sweep) sweep.push_back(to255(v));
  j["evaluation"] = {{"reference_epsilon_255", to255(e.reference_epsilon)},
                     {"protocols", std::move(protocols)},
                     {"sweep_255", std::move(sweep)},
                     {"sweep_attack", attack_json(e.sweep_attack)},
                     {"corruptions", e.corruptions},
                     {"transfer", e.transfer ? attack_json(*e.transfer) : json(nullptr)},
                     {"surrogate_seed_offset", e.surrogate_seed_offset},
                     {"histogram_bins", e.histogram_bins}};
  j["seeds"] = {{"data", cfg.seeds.data}, {"model", cfg.seeds.model}, {"eval", cfg.seeds.eval}};
  j["output_dir"] = cfg.output_dir;
  return j;
}

std::string stable_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

std::string fingerprint(const ExperimentConfig& cfg) {
  json j = training_json(cfg);
  json full = to_json(cfg);
  j["evaluation"] = full["evaluation"];
  j["seeds"] = full["seeds"];
  return stable_hash(j.dump());
}

std::string model_fingerprint(const ExperimentConfig& cfg) {
  return stable_hash(training_json(cfg).dump());
}

Datasets build_datasets(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  Datasets out;
  const std::uint64_t train_seed = derive_seed(cfg.seeds.data, {kTrainSet});
  const std::uint64_t test_seed = derive_seed(cfg.seeds.data, {kTestSet});
  if (d.kind == "moons") {
    out.train = data::make_overlap_moons(d.train_size, d.noise, d.overlap, train_seed);
    out.test = data::make_overlap_moons(d.test_size, d.noise, d.overlap, test_seed);
  } else if (d.kind == "linear_oracle") {
    const data::MarginRange range{d.margin_lo, d.margin_hi};
    out.train = data::make_linear_oracle(d.train_size, d.dim, cfg.seeds.data, range, train_seed);
    out.test = data::make_linear_oracle(d.test_size, d.dim, cfg.seeds.data, range, test_seed);
  } else {
    out.train = data::load_idx_images(d.train_images, d.train_labels, d.train_size);
    out.test = data::load_idx_images(d.test_images, d.test_labels, d.test_size);
  }
  out.train.validate();
  out.test.validate();
  if (out.train.sample_shape != cfg.arch.input) {
    throw ConfigError("config field 'model': input shape " + nn::to_string(cfg.arch.input) +
                      " does not match dataset samples " + nn::to_string(out.train.sample_shape));
  }
  return out;
}

TrainedRun train_model(const ExperimentConfig& cfg, const Datasets& data) {
  TrainedRun run;
  nn::Network net = nn::Network::he_uniform(cfg.arch, derive_seed(cfg.seeds.model, {kInit}));
  nn::Sgd<double> opt(cfg.optimizer);
  const std::uint64_t train_seed = derive_seed(cfg.seeds.model, {kTrain});
  const adaptive::FixedConfig fixed{cfg.batch_size, cfg.training_attack};

  adaptive::EpsilonMemory mem;
  if (cfg.mode == TrainingMode::iaat) {
    mem = adaptive::EpsilonMemory::uniform(data.train.size(), cfg.iaat.warmup_epsilon,
                                           cfg.iaat.eps_min, cfg.iaat.eps_max);
  }
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    switch (cfg.mode) {
      case TrainingMode::clean:
        run.log.push_back(adaptive::train_epoch_fixed(net, opt, data.train, 0.0, fixed, epoch, train_seed));
        break;
      case TrainingMode::fixed_eps:
        run.log.push_back(
            adaptive::train_epoch_fixed(net, opt, data.train, cfg.epsilon, fixed, epoch, train_seed));
        break;
      case TrainingMode::iaat:
        run.log.push_back(
            adaptive::train_epoch_iaat(net, opt, data.train, mem, cfg.iaat, epoch, train_seed));
        mem.check_bounds();
        mem.snapshot();
        break;
    }
  }
  run.memory_history = std::move(mem.history);
  run.checkpoint = {std::move(net), cfg.seeds.model, cfg.epochs, model_fingerprint(cfg)};
  return run;
}

ExperimentConfig surrogate_config(const ExperimentConfig& cfg) {
  ExperimentConfig s = cfg;
  s.seeds.model = cfg.seeds.model + cfg.evaluation.surrogate_seed_offset;
  return s;
}

eval::RunReport evaluate_model(const ExperimentConfig& cfg, const nn::Checkpoint& model,
                               const Datasets& data,
                               const std::vector<std::vector<double>>& memory_history,
                               const nn::Checkpoint* surrogate) {
  const auto& e = cfg.evaluation;
  const nn::Network& net = model.network;
  eval::RunReport r;
  r.config_fingerprint = fingerprint(cfg);

  const auto pred = nn::predict(net, data.test.inputs);
  Index correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.test.labels[i];
  r.natural_acc = static_cast<double>(correct) / static_cast<double>(data.test.size());

  r.whitebox = eval::whitebox_suite(net, data.test, e.protocols, cfg.seeds.eval);
  if (e.transfer) {
    if (surrogate == nullptr) {
      throw ConfigError("evaluation.transfer is configured but no surrogate model was supplied");
    }
    r.transfer_acc = eval::transfer_attack_eval(model, *surrogate, data.test, *e.transfer, cfg.seeds.eval);
  }
  r.eps_sweep = eval::epsilon_sweep(net, data.test, e.sweep, e.sweep_attack, cfg.seeds.eval);
  if (e.corruptions) r.corruption_acc = eval::corruption_accuracy(net, data.test, cfg.seeds.eval);
  if (!memory_history.empty()) {
    r.eps_stats = eval::epsilon_statistics(memory_history, cfg.iaat.eps_min, cfg.iaat.eps_max,
                                           e.histogram_bins);
  }

  json protocols = json::array();
  for (const auto& p : e.protocols) {
    protocols.push_back({{"name", p.name()},
                         {"epsilon_255", to255(p.epsilon)},
                         {"step_size_255", p.step_size ? json(to255(*p.step_size)) : json("2.5*eps/steps")}});
  }
  r.header = {{"name", cfg.name},
              {"mode", to_string(cfg.mode)},
              {"label", cfg.label()},
              {"train_epsilon_255", cfg.mode == TrainingMode::fixed_eps ? to255(cfg.epsilon) : 0.0},
              {"model_fingerprint", model.fingerprint},
              {"seeds", {{"data", cfg.seeds.data}, {"model", model.seed}, {"eval", cfg.seeds.eval}}},
              {"desk_scale_protocols", std::move(protocols)},
              {"full_scale_protocols", {"PGD10x5", "PGD100x5", "PGD1000x2"}},
              {"sweep_protocol", e.sweep_attack.name()},
              {"step_size_rule", "constant; 2.5*eps/steps unless step_size_255 is given"}};
  if (surrogate != nullptr) r.header["surrogate_seed"] = surrogate->seed;
  return r;
}

ExperimentConfig apply_overrides(ExperimentConfig cfg, const Overrides& o) {
  if (o.seed) cfg.seeds.model = *o.seed;
  if (o.data_seed) cfg.seeds.data = *o.data_seed;
  if (o.eval_seed) cfg.seeds.eval = *o.eval_seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  const std::filesystem::path out(cfg.output_dir);
  if (out.is_relative()) {
    if (const char* root = std::getenv("IAAT_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
      cfg.output_dir = (std::filesystem::path(root) / out).string();
    }
  }
  return cfg;
}

TrainOutputs write_training(const ExperimentConfig& cfg, const TrainedRun& run,
                            const std::filesystem::path& dir) {
  make_dirs(dir);
  TrainOutputs out{dir / "model.ckpt", dir / "train_log.csv", {}};
  nn::save_checkpoint(run.checkpoint, out.checkpoint);
  write_file(dir / "config.json", to_json(cfg).dump(2) + "\n");

  std::string log = "epoch,learning_rate,loss,train_clean_acc,mean_eps_255,min_eps_255,max_eps_255\n";
  for (const auto& s : run.log) {
    log += fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", s.epoch + 1,
                       nn::learning_rate_at(cfg.optimizer, s.epoch), s.loss, s.clean_accuracy,
                       s.mean_applied_eps * 255.0, s.min_applied_eps * 255.0,
                       s.max_applied_eps * 255.0);
  }
  write_file(out.log, log);

  if (!run.memory_history.empty()) {
    out.memory_dir = dir / "memory";
    make_dirs(out.memory_dir);
    for (std::size_t e = 0; e < run.memory_history.size(); ++e) {
      write_file(out.memory_dir / fmt::format("epoch_{:04d}.csv", e + 1),
                 adaptive::memory_to_csv(run.memory_history[e]));
    }
  }
  return out;
}

TrainOutputs cmd_train(const std::filesystem::path& config_path, const Overrides& o) {
  const ExperimentConfig cfg = apply_overrides(load_config(config_path), o);
  const Datasets data = build_datasets(cfg);
  const TrainedRun run = train_model(cfg, data);
  if (cfg.evaluation.transfer) {
    const ExperimentConfig sc = surrogate_config(cfg);
    write_training(sc, train_model(sc, data), std::filesystem::path(cfg.output_dir) / "surrogate");
  }
  return write_training(cfg, run, cfg.output_dir);
}

namespace {

std::vector<std::vector<double>> read_memory_dir(const std::filesystem::path& dir) {
  std::vector<std::vector<double>> history;
  if (!std::filesystem::is_directory(dir)) return history;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) history.push_back(adaptive::memory_from_csv(read_file(f)));
  return history;
}

void write_report(const eval::RunReport& r, const std::filesystem::path& dir) {
  write_file(dir / "report.json", eval::to_json(r).dump(2) + "\n");
  write_file(dir / "report.csv", eval::report_csv_header(r) + "\n" + eval::report_csv_row(r) + "\n");
}

}  // namespace

std::filesystem::path cmd_evaluate(const std::filesystem::path& checkpoint,
                                   const std::filesystem::path& config_path, const Overrides& o,
                                   const std::optional<std::filesystem::path>& surrogate) {
  ExperimentConfig cfg = apply_overrides(load_config(config_path), o);
  const nn::Checkpoint model = nn::load_checkpoint(checkpoint);
  cfg.seeds.model = model.seed;
  if (model.fingerprint != model_fingerprint(cfg)) {
    throw ConfigError("checkpoint " + checkpoint.string() + " was not trained with this config");
  }
  const Datasets data = build_datasets(cfg);
  const auto dir = checkpoint.parent_path();
  std::optional<nn::Checkpoint> sur;
  if (surrogate) {
    sur = nn::load_checkpoint(*surrogate);
  } else if (cfg.evaluation.transfer && std::filesystem::exists(dir / "surrogate" / "model.ckpt")) {
    sur = nn::load_checkpoint(dir / "surrogate" / "model.ckpt");
  }
  const auto history = read_memory_dir(dir / "memory");
  const eval::RunReport r = evaluate_model(cfg, model, data, history, sur ? &*sur : nullptr);
  write_report(r, dir);
  return dir / "report.json";
}

SweepOutputs cmd_sweep(const std::filesystem::path& config_path, const std::vector<double>& eps_list,
                       const Overrides& o) {
  if (eps_list.empty()) throw ConfigError("sweep needs at least one radius");
  const ExperimentConfig base = apply_overrides(load_config(config_path), o);
  const std::filesystem::path root(base.output_dir);
  make_dirs(root / "runs");

  std::vector<ExperimentConfig> runs;
  for (double eps : eps_list) {
    ExperimentConfig c = base;
    c.mode = eps > 0.0 ? TrainingMode::fixed_eps : TrainingMode::clean;
    c.epsilon = eps;
    runs.push_back(c);
  }
  ExperimentConfig adaptive_run = base;
  adaptive_run.mode = TrainingMode::iaat;
  adaptive_run.iaat.validate();
  runs.push_back(adaptive_run);

  SweepOutputs out;
  std::optional<Datasets> data;
  std::vector<eval::RunReport> reports;
  for (ExperimentConfig& c : runs) {
    const std::string fp = fingerprint(c);
    const auto dir = root / "runs" / fp;
    c.output_dir = dir.string();
    const auto report_path = dir / "report.json";
    if (std::filesystem::exists(report_path)) {
      try {
        auto existing = eval::report_from_json(json::parse(read_file(report_path)));
        if (existing.config_fingerprint == fp) {
          reports.push_back(std::move(existing));
          out.reports.push_back(report_path);
          continue;
        }
      } catch (const std::exception&) {
        // unreadable or stale: recompute below
      }
    }
    if (!data) data = build_datasets(base);
    const TrainedRun run = train_model(c, *data);
    write_training(c, run, dir);
    std::optional<TrainedRun> sur;
    if (c.evaluation.transfer) {
      const ExperimentConfig sc = surrogate_config(c);
      sur = train_model(sc, *data);
      write_training(sc, *sur, dir / "surrogate");
    }
    reports.push_back(evaluate_model(c, run.checkpoint, *data, run.memory_history,
                                     sur ? &sur->checkpoint : nullptr));
    write_report(reports.back(), dir);
    out.reports.push_back(report_path);
    ++out.runs_trained;
  }

  report::PlotSpec tradeoff;
  tradeoff.kind = report::PlotKind::tradeoff_scatter;
  tradeoff.title = "Robustness vs accuracy";
  tradeoff.x_label = "robust accuracy (%)";
  tradeoff.y_label = "natural accuracy (%)";
  tradeoff.robust_metric = base.evaluation.protocols.front().name();
  out.tradeoff_svg = root / "tradeoff.svg";
  write_file(out.tradeoff_svg, report::tradeoff_svg(reports, tradeoff));

  report::PlotSpec sweep;
  sweep.kind = report::PlotKind::sweep_lines;
  sweep.title = "Robust accuracy over test radius";
  sweep.x_label = "test epsilon (/255)";
  sweep.y_label = "robust accuracy (%)";
  out.sweep_svg = root / "sweep.svg";
  write_file(out.sweep_svg, report::sweep_svg(reports, sweep));

  std::string summary = eval::report_csv_header(reports.front()) + ",label\n";
  for (const auto& r : reports) {
    summary += eval::report_csv_row(r) + "," + r.header.value("label", std::string()) + "\n";
  }
  write_file(root / "summary.csv", summary);
  return out;
}

namespace {

std::vector<double> parse_eps_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const double eps = attacks::parse_epsilon_255(item);
    if (!(eps >= 0.0)) throw ConfigError("--eps entries must be >= 0 (got '" + item + "')");
    out.push_back(eps);
  }
  return out;
}

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--seed", o.seed, "Model seed (initialization and training)");
  app->add_option("--data-seed", o.data_seed, "Dataset seed");
  app->add_option("--eval-seed", o.eval_seed, "Evaluation attack seed");
  app->add_option("--out-dir", o.output_dir, "Output directory");
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Instance-adaptive adversarial training"};
  app.require_subcommand(1);

  std::string config;
  Overrides o;
  auto* train = app.add_subcommand("train", "Train one model from a config file");
  train->add_option("--config", config, "Experiment config (JSON)")->required();
  add_overrides(train, o);

  std::string checkpoint;
  std::optional<std::string> surrogate;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a trained checkpoint");
  evaluate->add_option("--checkpoint", checkpoint, "model.ckpt to evaluate")->required();
  evaluate->add_option("--config", config, "Config the checkpoint was trained with")->required();
  evaluate->add_option("--surrogate", surrogate, "Surrogate checkpoint for transfer attacks");
  add_overrides(evaluate, o);

  std::string eps_text = "0,1,2,3,4,5,6,7,8";
  auto* sweep = app.add_subcommand("sweep", "Fixed-radius baselines plus the adaptive run");
  sweep->add_option("--config", config, "Base experiment config (JSON)")->required();
  sweep->add_option("--eps", eps_text, "Comma-separated training radii, e.g. 0,2,4/255");
  add_overrides(sweep, o);

  std::string kind;
  std::vector<std::string> inputs;
  std::string output;
  report::PlotSpec plot;
  double percentile = 1.0;
  auto* rep = app.add_subcommand("report", "Render a plot or the extreme-radius gallery");
  rep->add_option("--kind", kind,
                  "tradeoff_scatter | sweep_lines | eps_evolution | eps_histogram | gallery")
      ->required();
  rep->add_option("--input", inputs, "Report JSON / memory CSV files or directories")->required();
  rep->add_option("--output", output, "Output file")->required();
  rep->add_option("--x-label", plot.x_label);
  rep->add_option("--y-label", plot.y_label);
  rep->add_option("--title", plot.title);
  rep->add_option("--metric", plot.robust_metric, "Whitebox protocol for the robustness axis");
  rep->add_option("--config", config, "Config for rebuilding the training set (gallery)");
  rep->add_option("--percentile", percentile, "Gallery tail size in percent");
  add_overrides(rep, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      const auto out = cmd_train(config, o);
      fmt::print("wrote {}\n", out.checkpoint.string());
    } else if (*evaluate) {
      std::optional<std::filesystem::path> sur;
      if (surrogate) sur = *surrogate;
      fmt::print("wrote {}\n", cmd_evaluate(checkpoint, config, o, sur).string());
    } else if (*sweep) {
      const auto out = cmd_sweep(config, parse_eps_list(eps_text), o);
      fmt::print("{} runs trained, {} reused\nwrote {}\nwrote {}\n", out.runs_trained,
                 static_cast<int>(out.reports.size()) - out.runs_trained,
                 out.tradeoff_svg.string(), out.sweep_svg.string());
    } else if (*rep) {
      if (kind == "gallery") {
        if (config.empty()) throw ConfigError("report --kind gallery needs --config");
        if (inputs.size() != 1) throw ConfigError("report --kind gallery takes one memory CSV");
        const ExperimentConfig cfg = apply_overrides(load_config(config), o);
        const Datasets data = build_datasets(cfg);
        const auto mem = adaptive::memory_from_csv(read_file(inputs.front()));
        write_file(output, report::extreme_epsilon_gallery(mem, data.train, percentile));
      } else {
        plot.kind = report::plot_kind_from_string(kind);
        for (const auto& in : inputs) plot.inputs.emplace_back(in);
        plot.output_path = output;
        report::render(plot);
      }
      fmt::print("wrote {}\n", output);
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric error: {}\n", e.what());
    return 3;
  } catch (const FormatError& e) {
    fmt::print(stderr, "format error: {}\n", e.what());
    return 4;
  } catch (const IoError& e) {
    fmt::print(stderr, "i/o error: {}\n", e.what());
    return 4;
  }
  return 0;
}

}  // namespace iaat::experiment
