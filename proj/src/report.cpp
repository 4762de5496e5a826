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

#include "iaat/report/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace iaat::report {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range padded(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

// 1-2-5 tick spacing giving roughly `target` ticks.
double tick_step(const Range& r, int target) {
  const double raw = (r.hi - r.lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

/// Fixed-size chart with a plot area, axes and a legend column.
class Canvas {
 public:
  static constexpr double kWidth = 680;
  static constexpr double kHeight = 440;
  static constexpr double kLeft = 70;
  static constexpr double kRight = 170;
  static constexpr double kTop = 40;
  static constexpr double kBottom = 60;

  Canvas(Range x, Range y, const PlotSpec& spec) : x_(x), y_(y) {
    out_ += fmt::format(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{:.0f}\" "
        "height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n"
        "<rect x=\"0\" y=\"0\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n",
        kWidth, kHeight, kWidth, kHeight, kWidth, kHeight);
    out_ += fmt::format(
        "<text x=\"{:.2f}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" "
        "text-anchor=\"middle\">{}</text>\n",
        kLeft + plot_w() / 2, escape(spec.title));
    axes(spec.x_label, spec.y_label);
  }

  double px(double x) const { return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * plot_w(); }
  double py(double y) const { return kTop + (y_.hi - y) / (y_.hi - y_.lo) * plot_h(); }

  void circle(double x, double y, const char* color) {
    out_ += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"5\" fill=\"{}\"/>\n", px(x), py(y),
                        color);
  }

  void diamond(double x, double y, const char* color) {
    const double cx = px(x);
    const double cy = py(y);
    out_ += fmt::format(
        "<polygon points=\"{:.2f},{:.2f} {:.2f},{:.2f} {:.2f},{:.2f} {:.2f},{:.2f}\" fill=\"{}\"/>\n",
        cx, cy - 7, cx + 7, cy, cx, cy + 7, cx - 7, cy, color);
  }

  void square(double x, double y, const char* color) {
    out_ += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"9\" height=\"9\" fill=\"{}\"/>\n", px(x) - 4.5,
        py(y) - 4.5, color);
  }

  void label(double x, double y, const std::string& text) {
    out_ += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
        px(x) + 8, py(y) - 6, escape(text));
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const char* color,
                double stroke_width, bool dashed = false) {
    if (pts.empty()) return;
    std::string p;
    for (const auto& [x, y] : pts) p += fmt::format("{}{:.2f},{:.2f}", p.empty() ? "" : " ", px(x), py(y));
    out_ += fmt::format(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{:.1f}\"{}/>\n", p,
        color, stroke_width, dashed ? " stroke-dasharray=\"5,3\"" : "");
  }

  void legend(const std::string& text, const char* color) {
    const double y = kTop + 10 + 18 * legend_rows_++;
    const double x = kWidth - kRight + 15;
    out_ += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n"
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        x, y - 10, color, x + 18, y, escape(text));
  }

  std::string finish() {
    out_ += "</svg>\n";
    return std::move(out_);
  }

 private:
  static double plot_w() { return kWidth - kLeft - kRight; }
  static double plot_h() { return kHeight - kTop - kBottom; }

  void axes(const std::string& xl, const std::string& yl) {
    const double x0 = kLeft;
    const double y0 = kTop + plot_h();
    out_ += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
        "stroke=\"black\"/>\n",
        x0, kTop, plot_w(), plot_h());
    const double xs = tick_step(x_, 6);
    for (double t = std::ceil(x_.lo / xs) * xs; t <= x_.hi + 1e-12; t += xs) {
      out_ += fmt::format(
          "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"black\"/>\n"
          "<text x=\"{0:.2f}\" y=\"{3:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
          "text-anchor=\"middle\">{4}</text>\n",
          px(t), y0, y0 + 5, y0 + 18, fmt::format("{:.4g}", std::abs(t) < 1e-12 ? 0.0 : t));
    }
    const double ys = tick_step(y_, 6);
    for (double t = std::ceil(y_.lo / ys) * ys; t <= y_.hi + 1e-12; t += ys) {
      out_ += fmt::format(
          "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"black\"/>\n"
          "<text x=\"{3:.2f}\" y=\"{4:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
          "text-anchor=\"end\">{5}</text>\n",
          x0 - 5, py(t), x0, x0 - 8, py(t) + 4, fmt::format("{:.4g}", std::abs(t) < 1e-12 ? 0.0 : t));
    }
    out_ += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
        "text-anchor=\"middle\">{}</text>\n",
        kLeft + plot_w() / 2, kHeight - 18, escape(xl));
    out_ += fmt::format(
        "<text x=\"18\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
        "text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2f})\">{}</text>\n",
        kTop + plot_h() / 2, kTop + plot_h() / 2, escape(yl));
  }

  Range x_;
  Range y_;
  int legend_rows_ = 0;
  std::string out_;
};

std::string run_mode(const eval::RunReport& r) { return r.header.value("mode", std::string()); }

std::string run_label(const eval::RunReport& r, std::size_t i) {
  return r.header.value("label", fmt::format("run {}", i));
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read plot input " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<eval::RunReport> load_reports(const std::vector<std::filesystem::path>& inputs) {
  std::vector<eval::RunReport> out;
  for (const auto& p : inputs) {
    try {
      out.push_back(eval::report_from_json(nlohmann::json::parse(read_text(p))));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("plot input " + p.string() + " is not valid JSON: " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("plot input " + p.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::vector<double>> load_history(const std::vector<std::filesystem::path>& inputs) {
  std::vector<std::filesystem::path> files;
  for (const auto& p : inputs) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> found;
      for (const auto& e : std::filesystem::directory_iterator(p)) {
        if (e.path().extension() == ".csv") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      if (found.empty()) throw IoError("no memory CSV files in " + p.string());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  std::vector<std::vector<double>> history;
  for (const auto& f : files) {
    try {
      history.push_back(adaptive::memory_from_csv(read_text(f)));
    } catch (const FormatError& e) {
      throw ConfigError("plot input " + f.string() + ": " + e.what());
    }
    if (history.back().size() != history.front().size()) {
      throw ConfigError("plot input " + f.string() + " has a different sample count");
    }
  }
  return history;
}

}  // namespace

PlotKind plot_kind_from_string(const std::string& name) {
  for (PlotKind k : {PlotKind::tradeoff_scatter, PlotKind::sweep_lines, PlotKind::eps_evolution,
                     PlotKind::eps_histogram}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown plot kind '" + name + "'");
}

std::string to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::tradeoff_scatter: return "tradeoff_scatter";
    case PlotKind::sweep_lines: return "sweep_lines";
    case PlotKind::eps_evolution: return "eps_evolution";
    case PlotKind::eps_histogram: return "eps_histogram";
  }
  return "?";
}

std::vector<std::pair<double, double>> tradeoff_points(const std::vector<eval::RunReport>& runs,
                                                       const std::string& robust_metric) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : runs) {
    if (r.whitebox.empty()) throw ConfigError("run report has no whitebox results");
    double robust = r.whitebox.begin()->second;
    if (!robust_metric.empty()) {
      const auto it = r.whitebox.find(robust_metric);
      if (it == r.whitebox.end()) {
        throw ConfigError("run report lacks whitebox protocol " + robust_metric);
      }
      robust = it->second;
    }
    pts.emplace_back(robust, r.natural_acc);
  }
  return pts;
}

std::string tradeoff_svg(const std::vector<eval::RunReport>& runs, const PlotSpec& spec) {
  const auto pts = tradeoff_points(runs, spec.robust_metric);
  double xlo = 1.0, xhi = 0.0, ylo = 1.0, yhi = 0.0;
  for (const auto& [x, y] : pts) {
    xlo = std::min(xlo, x);
    xhi = std::max(xhi, x);
    ylo = std::min(ylo, y);
    yhi = std::max(yhi, y);
  }
  Canvas c(padded(xlo * 100, xhi * 100), padded(ylo * 100, yhi * 100), spec);
  bool seen_fixed = false, seen_iaat = false, seen_other = false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto [x, y] = pts[i];
    const std::string mode = run_mode(runs[i]);
    if (mode == "iaat") {
      c.diamond(x * 100, y * 100, "#d62728");
      seen_iaat = true;
    } else if (mode == "fixed_eps") {
      c.circle(x * 100, y * 100, "#1f77b4");
      seen_fixed = true;
    } else {
      c.square(x * 100, y * 100, "#7f7f7f");
      seen_other = true;
    }
    c.label(x * 100, y * 100, run_label(runs[i], i));
  }
  if (seen_fixed) c.legend("fixed epsilon", "#1f77b4");
  if (seen_iaat) c.legend("instance adaptive", "#d62728");
  if (seen_other) c.legend("other", "#7f7f7f");
  return c.finish();
}

std::string sweep_svg(const std::vector<eval::RunReport>& runs, const PlotSpec& spec) {
  double xhi = 0.0;
  for (const auto& r : runs) {
    if (r.eps_sweep.empty()) throw ConfigError("run report has no epsilon sweep");
    xhi = std::max(xhi, r.eps_sweep.back().first * 255.0);
  }
  Canvas c(padded(0.0, xhi), padded(0.0, 100.0), spec);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::vector<std::pair<double, double>> line;
    for (const auto& [eps, acc] : runs[i].eps_sweep) line.emplace_back(eps * 255.0, acc * 100.0);
    const char* color = kPalette[i % std::size(kPalette)];
    c.polyline(line, color, 2.0, run_mode(runs[i]) == "iaat");
    c.legend(run_label(runs[i], i), color);
  }
  return c.finish();
}

std::string evolution_svg(const std::vector<std::vector<double>>& history, const PlotSpec& spec) {
  if (history.empty() || history.front().empty()) throw ConfigError("empty epsilon history");
  const std::size_t n = history.front().size();
  const std::size_t tracked[] = {0, n / 2, n - 1};
  double hi = 0.0;
  for (const auto& snap : history) hi = std::max(hi, *std::max_element(snap.begin(), snap.end()));
  Canvas c(padded(1.0, static_cast<double>(history.size())), padded(0.0, hi * 255.0), spec);
  std::vector<std::pair<double, double>> mean;
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& s = history[e];
    mean.emplace_back(static_cast<double>(e + 1),
                      std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n) * 255.0);
  }
  c.polyline(mean, "#000000", 3.0);
  c.legend("mean", "#000000");
  for (std::size_t k = 0; k < std::size(tracked); ++k) {
    std::vector<std::pair<double, double>> line;
    for (std::size_t e = 0; e < history.size(); ++e) {
      line.emplace_back(static_cast<double>(e + 1), history[e][tracked[k]] * 255.0);
    }
    c.polyline(line, kPalette[k], 1.5, true);
    c.legend(fmt::format("sample {}", tracked[k]), kPalette[k]);
  }
  return c.finish();
}

std::string histogram_svg(const std::vector<std::vector<double>>& history, double lo, double hi,
                          const PlotSpec& spec) {
  if (history.empty()) throw ConfigError("empty epsilon history");
  constexpr int kBins = 32;
  std::vector<std::size_t> snaps{0, history.size() / 2, history.size() - 1};
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  std::vector<eval::Histogram> hists;
  double ymax = 0.0;
  for (std::size_t s : snaps) {
    hists.push_back(eval::histogram(history[s], lo, hi, kBins));
    for (auto v : hists.back().counts) ymax = std::max(ymax, static_cast<double>(v));
  }
  Canvas c(padded(lo * 255.0, hi * 255.0), padded(0.0, ymax), spec);
  for (std::size_t k = 0; k < hists.size(); ++k) {
    const auto& h = hists[k];
    std::vector<std::pair<double, double>> outline;
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      const double x0 = (h.lo + h.bin_width() * static_cast<double>(b)) * 255.0;
      const double x1 = x0 + h.bin_width() * 255.0;
      const double y = static_cast<double>(h.counts[b]);
      outline.emplace_back(x0, y);
      outline.emplace_back(x1, y);
    }
    c.polyline(outline, kPalette[k], 2.0);
    c.legend(fmt::format("epoch {}", snaps[k] + 1), kPalette[k]);
  }
  return c.finish();
}

double frontier_natural_at(std::vector<std::pair<double, double>> points, double robust) {
  if (points.empty()) throw ConfigError("frontier needs at least one point");
  // Pareto set: sort by robust descending, keep points whose natural beats
  // every more-robust point.
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second > b.second;
  });
  std::vector<std::pair<double, double>> front;
  for (const auto& p : points) {
    if (front.empty() || p.second > front.back().second) front.push_back(p);
  }
  std::reverse(front.begin(), front.end());  // robust ascending, natural descending
  if (robust <= front.front().first) return front.front().second;
  if (robust >= front.back().first) return front.back().second;
  for (std::size_t k = 1; k < front.size(); ++k) {
    const auto& [x0, y0] = front[k - 1];
    const auto& [x1, y1] = front[k];
    if (robust <= x1) return y0 + (y1 - y0) * (robust - x0) / (x1 - x0);
  }
  return front.back().second;
}

std::string extreme_epsilon_gallery(const std::vector<double>& mem,
                                    const data::LabeledDataset& dataset, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ConfigError("gallery percentile must lie in (0, 100]");
  }
  if (static_cast<nn::Index>(mem.size()) != dataset.size()) {
    throw ConfigError("gallery: memory and dataset sizes differ");
  }
  const bool with_margin = dataset.margins.has_value();
  std::string out = "group,sample_index,epsilon_255,label";
  out += with_margin ? ",margin_255\n" : "\n";
  const std::size_t n = mem.size();
  if (n == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mem[a] < mem[b]; });
  const auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * percentile / 100.0));

  auto row = [&](const char* group, std::size_t i) {
    out += fmt::format("{},{},{},{}", group, i, mem[i] * 255.0, dataset.labels[i]);
    out += with_margin ? fmt::format(",{}\n", (*dataset.margins)[i] * 255.0) : "\n";
  };
  if (2 * k >= n) {
    for (std::size_t i : order) row("all", i);
    return out;
  }
  for (std::size_t r = 0; r < k; ++r) row("bottom", order[r]);
  for (std::size_t r = n - k; r < n; ++r) row("top", order[r]);
  return out;
}

std::string render(const PlotSpec& spec) {
  if (spec.inputs.empty()) throw ConfigError("plot needs at least one input");
  for (const auto& p : spec.inputs) {
    if (!std::filesystem::exists(p)) throw IoError("plot input " + p.string() + " does not exist");
  }
  std::string svg;
  switch (spec.kind) {
    case PlotKind::tradeoff_scatter:
      svg = tradeoff_svg(load_reports(spec.inputs), spec);
      break;
    case PlotKind::sweep_lines:
      svg = sweep_svg(load_reports(spec.inputs), spec);
      break;
    case PlotKind::eps_evolution:
      svg = evolution_svg(load_history(spec.inputs), spec);
      break;
    case PlotKind::eps_histogram: {
      const auto history = load_history(spec.inputs);
      double hi = 0.0;
      for (const auto& s : history) {
        for (double v : s) hi = std::max(hi, v);
      }
      hi = std::max(4.0, std::ceil(hi * 255.0 / 4.0 + 1e-9) * 4.0) / 255.0;
      svg = histogram_svg(history, 0.0, hi, spec);
      break;
    }
  }
  if (!spec.output_path.empty()) {
    std::ofstream out(spec.output_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + spec.output_path.string());
    out << svg;
  }
  return svg;
}

}  // namespace iaat::report
