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

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "iaat/adaptive/iaat.hpp"
#include "iaat/data/dataset.hpp"
#include "iaat/eval/eval.hpp"

namespace iaat::report {

enum class PlotKind { tradeoff_scatter, sweep_lines, eps_evolution, eps_histogram };

PlotKind plot_kind_from_string(const std::string& name);
std::string to_string(PlotKind kind);

/// What to draw. Inputs are RunReport JSON files for tradeoff_scatter and
/// sweep_lines; per-epoch memory CSV files (or directories holding them) for
/// eps_evolution and eps_histogram.
struct PlotSpec {
  PlotKind kind = PlotKind::tradeoff_scatter;
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path output_path;
  std::string x_label;
  std::string y_label;
  std::string title;
  /// Whitebox protocol used as the robustness axis of the tradeoff plot;
  /// empty picks the first protocol of each report.
  std::string robust_metric;
};

/// Loads the inputs, renders, writes output_path and returns the SVG text.
/// Throws IoError / ConfigError naming the offending input path.
std::string render(const PlotSpec& spec);

/// (robust accuracy, natural accuracy) for each report.
std::vector<std::pair<double, double>> tradeoff_points(const std::vector<eval::RunReport>& runs,
                                                       const std::string& robust_metric);

std::string tradeoff_svg(const std::vector<eval::RunReport>& runs, const PlotSpec& spec);
std::string sweep_svg(const std::vector<eval::RunReport>& runs, const PlotSpec& spec);
std::string evolution_svg(const std::vector<std::vector<double>>& history, const PlotSpec& spec);
std::string histogram_svg(const std::vector<std::vector<double>>& history, double lo, double hi,
                          const PlotSpec& spec);

/// Natural accuracy of the piecewise-linear Pareto frontier through the
/// (robust, natural) points, evaluated at `robust`. Outside the frontier's
/// robust range the nearest endpoint's natural accuracy is returned.
double frontier_natural_at(std::vector<std::pair<double, double>> points, double robust);

/// Lowest and highest `percentile` percent of memory entries as CSV with
/// columns group,sample_index,epsilon_255,label[,margin_255]. When the two
/// groups would overlap every sample is listed once, ascending, as "all".
std::string extreme_epsilon_gallery(const std::vector<double>& mem,
                                    const data::LabeledDataset& dataset, double percentile);

}  // namespace iaat::report
