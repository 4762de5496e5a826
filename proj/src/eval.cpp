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

#include "iaat/eval/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "iaat/data/corruption.hpp"
#include "iaat/seed.hpp"

namespace iaat::eval {

std::map<std::string, double> whitebox_suite(const nn::Network& net,
                                             const data::LabeledDataset& testset,
                                             const std::vector<attacks::AttackSpec>& protocols,
                                             std::uint64_t seed) {
  std::map<std::string, double> out;
  for (const auto& spec : protocols) {
    const std::string name = spec.name();
    if (out.contains(name)) throw ConfigError("duplicate whitebox protocol " + name);
    out[name] = attacks::evaluate_robust_accuracy(net, testset, spec, seed);
  }
  return out;
}

double transfer_attack_eval(const nn::Checkpoint& target, const nn::Checkpoint& surrogate,
                            const data::LabeledDataset& testset, const attacks::AttackSpec& spec,
                            std::uint64_t seed) {
  if (target.fingerprint != surrogate.fingerprint) {
    throw ConfigError("surrogate was trained with a different configuration (" +
                      surrogate.fingerprint + " vs " + target.fingerprint + ")");
  }
  return attacks::evaluate_attack(target.network, surrogate.network, testset, spec, seed)
      .robust_accuracy;
}

std::vector<std::pair<double, double>> epsilon_sweep(const nn::Network& net,
                                                     const data::LabeledDataset& testset,
                                                     std::vector<double> eps_grid,
                                                     const attacks::AttackSpec& spec_template,
                                                     std::uint64_t seed) {
  std::sort(eps_grid.begin(), eps_grid.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(eps_grid.size());
  for (double eps : eps_grid) {
    out.emplace_back(eps, attacks::evaluate_robust_accuracy(net, testset,
                                                            spec_template.with_epsilon(eps), seed));
  }
  return out;
}

std::map<std::string, double> corruption_accuracy(const nn::Network& net,
                                                  const data::LabeledDataset& testset,
                                                  std::uint64_t seed) {
  std::map<std::string, double> out;
  const Index n = testset.size();
  if (n == 0) return out;
  for (data::CorruptionKind kind : data::kAllCorruptions) {
    Index correct = 0;
    for (int severity = 1; severity <= 5; ++severity) {
      nn::MatrixXd x(testset.inputs.rows(), n);
      for (Index i = 0; i < n; ++i) {
        x.col(i) = data::corrupt(
            testset.inputs.col(i), testset.sample_shape, {kind, severity},
            derive_seed(seed, {static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(severity),
                               static_cast<std::uint64_t>(i)}));
      }
      const auto pred = nn::predict(net, x);
      for (Index i = 0; i < n; ++i) {
        correct += pred[static_cast<std::size_t>(i)] == testset.labels[static_cast<std::size_t>(i)];
      }
    }
    out[data::to_string(kind)] = static_cast<double>(correct) / static_cast<double>(5 * n);
  }
  return out;
}

Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins) {
  if (bins < 1 || !(hi > lo)) throw ConfigError("histogram needs bins >= 1 and hi > lo");
  Histogram h{lo, hi, std::vector<Index>(static_cast<std::size_t>(bins), 0)};
  for (double v : values) {
    auto b = static_cast<long>(std::floor((v - lo) / h.bin_width()));
    b = std::clamp(b, 0L, static_cast<long>(bins - 1));
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const auto n = static_cast<long double>(v.size());
  const auto mean = static_cast<double>(std::accumulate(v.begin(), v.end(), 0.0L) / n);
  long double ss = 0.0L;
  for (double x : v) ss += static_cast<long double>(x - mean) * (x - mean);
  return {mean, static_cast<double>(std::sqrt(ss / n))};
}

}  // namespace

EpsilonStatistics epsilon_statistics(const std::vector<std::vector<double>>& history, double lo,
                                     double hi, int bins) {
  EpsilonStatistics s;
  for (const auto& snap : history) {
    const auto [m, sd] = mean_std(snap);
    s.mean_series.push_back(m);
    s.std_series.push_back(sd);
  }
  const std::vector<double> last = history.empty() ? std::vector<double>{} : history.back();
  std::tie(s.mean, s.std) = mean_std(last);
  s.histogram = histogram(last, lo, hi, bins);
  return s;
}

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["natural_acc"] = r.natural_acc;
  j["whitebox"] = r.whitebox;
  j["transfer_acc"] = r.transfer_acc ? nlohmann::json(*r.transfer_acc) : nlohmann::json(nullptr);
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto& [eps, acc] : r.eps_sweep) sweep.push_back({{"epsilon_255", eps * 255.0}, {"robust_acc", acc}});
  j["eps_sweep"] = std::move(sweep);
  j["corruption_acc"] = r.corruption_acc;
  if (r.eps_stats) {
    const auto& s = *r.eps_stats;
    auto scale = [](std::vector<double> v) {
      for (double& x : v) x *= 255.0;
      return v;
    };
    j["eps_stats"] = {{"mean_255", s.mean * 255.0},
                      {"std_255", s.std * 255.0},
                      {"mean_series_255", scale(s.mean_series)},
                      {"std_series_255", scale(s.std_series)},
                      {"histogram",
                       {{"lo_255", s.histogram.lo * 255.0},
                        {"hi_255", s.histogram.hi * 255.0},
                        {"counts", s.histogram.counts}}}};
  } else {
    j["eps_stats"] = nullptr;
  }
  j["config_fingerprint"] = r.config_fingerprint;
  j["header"] = r.header;
  return j;
}

RunReport report_from_json(const nlohmann::json& j) {
  try {
    RunReport r;
    r.natural_acc = j.at("natural_acc").get<double>();
    r.whitebox = j.at("whitebox").get<std::map<std::string, double>>();
    if (!j.at("transfer_acc").is_null()) r.transfer_acc = j.at("transfer_acc").get<double>();
    for (const auto& p : j.at("eps_sweep")) {
      r.eps_sweep.emplace_back(p.at("epsilon_255").get<double>() / 255.0, p.at("robust_acc").get<double>());
    }
    r.corruption_acc = j.at("corruption_acc").get<std::map<std::string, double>>();
    if (!j.at("eps_stats").is_null()) {
      const auto& s = j.at("eps_stats");
      EpsilonStatistics e;
      e.mean = s.at("mean_255").get<double>() / 255.0;
      e.std = s.at("std_255").get<double>() / 255.0;
      for (double v : s.at("mean_series_255").get<std::vector<double>>()) e.mean_series.push_back(v / 255.0);
      for (double v : s.at("std_series_255").get<std::vector<double>>()) e.std_series.push_back(v / 255.0);
      const auto& h = s.at("histogram");
      e.histogram.lo = h.at("lo_255").get<double>() / 255.0;
      e.histogram.hi = h.at("hi_255").get<double>() / 255.0;
      e.histogram.counts = h.at("counts").get<std::vector<Index>>();
      r.eps_stats = std::move(e);
    }
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.header = j.value("header", nlohmann::json::object());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run report: ") + e.what());
  }
}

std::string report_csv_header(const RunReport& r) {
  std::string h = "config_fingerprint,natural_acc";
  for (const auto& [name, _] : r.whitebox) h += ",whitebox_" + name;
  h += ",transfer_acc";
  for (const auto& [eps, _] : r.eps_sweep) h += fmt::format(",sweep_{}", eps * 255.0);
  for (const auto& [kind, _] : r.corruption_acc) h += ",corruption_" + kind;
  h += ",eps_mean_255,eps_std_255";
  return h;
}

std::string report_csv_row(const RunReport& r) {
  std::string row = fmt::format("{},{}", r.config_fingerprint, r.natural_acc);
  for (const auto& [_, v] : r.whitebox) row += fmt::format(",{}", v);
  row += r.transfer_acc ? fmt::format(",{}", *r.transfer_acc) : std::string(",");
  for (const auto& [_, v] : r.eps_sweep) row += fmt::format(",{}", v);
  for (const auto& [_, v] : r.corruption_acc) row += fmt::format(",{}", v);
  if (r.eps_stats) {
    row += fmt::format(",{},{}", r.eps_stats->mean * 255.0, r.eps_stats->std * 255.0);
  } else {
    row += ",,";
  }
  return row;
}

}  // namespace iaat::eval
