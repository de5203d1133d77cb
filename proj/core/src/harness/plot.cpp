#include "seps/harness/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "seps/common.hpp"
#include "seps/harness/config.hpp"
#include "seps/harness/run.hpp"

namespace fs = std::filesystem;

namespace seps::harness {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string render_svg(const Chart& chart) {
  const double width = 720, height = 440;
  const double left = 70, right = 170, top = 40, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;

  std::size_t epochs = 0;
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -ymin;
  for (const auto& s : chart.series) {
    epochs = std::max(epochs, s.mean.size());
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      ymin = std::min({ymin, s.lo[i], s.mean[i]});
      ymax = std::max({ymax, s.hi[i], s.mean[i]});
    }
  }
  if (chart.limit) {
    ymin = std::min(ymin, *chart.limit);
    ymax = std::max(ymax, *chart.limit);
  }
  if (!std::isfinite(ymin)) ymin = 0.0, ymax = 1.0;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const double xmax = epochs > 1 ? double(epochs - 1) : 1.0;
  auto X = [&](double e) { return left + pw * e / xmax; };
  auto Y = [&](double v) { return top + ph * (ymax - v) / (ymax - ymin); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(chart.title) + "</text>\n";
  // Axes and ticks.
  svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = ymin + (ymax - ymin) * i / 5.0;
    svg += "<line x1=\"" + num(left) + "\" x2=\"" + num(left + pw) + "\" y1=\"" + num(Y(v)) + "\" y2=\"" + num(Y(v)) +
           "\" stroke=\"#ddd\"/>\n";
    svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(Y(v) + 4) + "\" text-anchor=\"end\">" + tick_label(v) +
           "</text>\n";
    const double e = xmax * i / 5.0;
    svg += "<text x=\"" + num(X(e)) + "\" y=\"" + num(top + ph + 18) + "\" text-anchor=\"middle\">" +
           tick_label(std::round(e)) + "</text>\n";
  }
  svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 10) + "\" text-anchor=\"middle\">epoch</text>\n";
  svg += "<text transform=\"translate(18," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(chart.y_label) + "</text>\n";

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const Series& s = chart.series[k];
    const std::string color = kPalette[k % (sizeof kPalette / sizeof kPalette[0])];
    if (s.mean.empty()) continue;
    std::string band;
    for (std::size_t i = 0; i < s.hi.size(); ++i) band += num(X(double(i))) + "," + num(Y(s.hi[i])) + " ";
    for (std::size_t i = s.lo.size(); i-- > 0;) band += num(X(double(i))) + "," + num(Y(s.lo[i])) + " ";
    svg += "<polygon points=\"" + band + "\" fill=\"" + color + "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    std::string line;
    for (std::size_t i = 0; i < s.mean.size(); ++i) line += num(X(double(i))) + "," + num(Y(s.mean[i])) + " ";
    svg += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.6\"/>\n";
    const double ly = top + 14 + 18 * double(k);
    svg += "<line x1=\"" + num(left + pw + 12) + "\" x2=\"" + num(left + pw + 32) + "\" y1=\"" + num(ly) + "\" y2=\"" +
           num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"3\"/>\n";
    svg += "<text x=\"" + num(left + pw + 38) + "\" y=\"" + num(ly + 4) + "\">" + escape(s.label) + "</text>\n";
  }
  if (chart.limit) {
    const double y = Y(*chart.limit);
    svg += "<line x1=\"" + num(left) + "\" x2=\"" + num(left + pw) + "\" y1=\"" + num(y) + "\" y2=\"" + num(y) +
           "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
    svg += "<text x=\"" + num(left + pw - 4) + "\" y=\"" + num(y - 5) + "\" text-anchor=\"end\">" +
           escape(chart.limit_label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

PlotResult plot_runs(const std::vector<std::string>& run_dirs, const std::string& output_dir,
                     const PlotOptions& options) {
  require(!run_dirs.empty(), "plot_runs: no run directory given");
  PlotResult result;

  struct RunData {
    std::string key;
    std::map<std::uint64_t, std::vector<MetricsRecord>> by_seed;
    std::optional<double> d0, d1;
  };
  std::vector<RunData> runs;
  std::map<std::string, int> algo_count;
  for (const auto& dir : run_dirs) {
    const auto rows = read_metrics((fs::path(dir) / "metrics.csv").string());
    RunData rd;
    rd.key = rows.front().algorithm;
    for (const auto& r : rows) rd.by_seed[r.seed].push_back(r);
    const fs::path cfg = fs::path(dir) / "config.resolved";
    if (fs::exists(cfg)) {
      const ConfigMap map = read_config_file(cfg.string());
      if (auto it = map.find("d0"); it != map.end()) rd.d0 = std::stod(it->second.value);
      if (auto it = map.find("d1"); it != map.end()) rd.d1 = std::stod(it->second.value);
    }
    ++algo_count[rd.key];
    rd.key = rows.front().run_id + "|" + rd.key;
    runs.push_back(std::move(rd));
  }

  std::optional<double> d0 = options.d0, d1 = options.d1;
  for (const auto& rd : runs) {
    if (!d0 && rd.d0) d0 = rd.d0;
    if (!d1 && rd.d1) d1 = rd.d1;
  }

  struct MetricDef {
    std::string file, title, axis;
    double MetricsRecord::*field;
    std::optional<double> limit;
    std::string limit_label;
  };
  const bool und = options.undiscounted;
  const std::string suffix = und ? " (undiscounted)" : " (discounted)";
  std::vector<MetricDef> defs{
      {"J_u.svg", "Returns under u_H" + suffix, "J_u",
       und ? &MetricsRecord::j_u_undiscounted : &MetricsRecord::j_u, std::nullopt, ""},
      {"J_R.svg", "Returns under R_A" + suffix, "J_R", und ? &MetricsRecord::j_r_undiscounted : &MetricsRecord::j_r,
       d0, d0 ? "d0 = " + tick_label(*d0) : ""},
      {"J_C1.svg", "Returns under C_1" + suffix, "J_C1",
       und ? &MetricsRecord::j_c1_undiscounted : &MetricsRecord::j_c1, d1, d1 ? "d1 = " + tick_label(*d1) : ""},
  };

  std::vector<std::pair<std::string, std::string>> outputs;
  for (const auto& def : defs) {
    Chart chart{def.title, def.axis, {}, def.limit, def.limit_label};
    for (const auto& rd : runs) {
      const std::string algo = rd.key.substr(rd.key.find('|') + 1);
      const std::string run_id = rd.key.substr(0, rd.key.find('|'));
      Series s;
      s.label = algo_count[algo] > 1 ? run_id : algo;
      std::size_t common = std::numeric_limits<std::size_t>::max();
      std::size_t longest = 0;
      for (const auto& [seed, rows] : rd.by_seed) {
        common = std::min(common, rows.size());
        longest = std::max(longest, rows.size());
      }
      if (common != longest && &def == &defs.front()) {
        result.warnings.push_back(run_id + ": seeds have different epoch counts; truncating to " +
                                  std::to_string(common) + " epochs");
      }
      for (std::size_t e = 0; e < common; ++e) {
        double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& [seed, rows] : rd.by_seed) {
          const double v = rows[e].*def.field;
          sum += v;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        s.mean.push_back(sum / double(rd.by_seed.size()));
        s.lo.push_back(lo);
        s.hi.push_back(hi);
      }
      chart.series.push_back(std::move(s));
    }
    outputs.emplace_back((fs::path(output_dir) / def.file).string(), render_svg(chart));
  }
  fs::create_directories(output_dir);
  for (const auto& [path, svg] : outputs) {
    std::ofstream out(path);
    out << svg;
    result.files.push_back(path);
  }
  return result;
}

}  // namespace seps::harness
