#pragma once

#include <optional>
#include <string>
#include <vector>

namespace seps::harness {

struct Series {
  std::string label;
  std::vector<double> mean;
  std::vector<double> lo;
  std::vector<double> hi;
};

struct Chart {
  std::string title;
  std::string y_label;
  std::vector<Series> series;
  /// Horizontal reference line (constraint limit).
  std::optional<double> limit;
  std::string limit_label;
};

/// Self-contained SVG with one polyline per series, a min-max band and the limit line.
std::string render_svg(const Chart& chart);

struct PlotOptions {
  bool undiscounted = false;
  /// Limits to draw; when unset, taken from each run's config.resolved.
  std::optional<double> d0;
  std::optional<double> d1;
};

struct PlotResult {
  std::vector<std::string> files;
  std::vector<std::string> warnings;
};

/// Reads metrics.csv from each run directory and writes J_u.svg, J_R.svg and
/// J_C1.svg into `output_dir`. Series are keyed by algorithm (by run id when two
/// runs share an algorithm). Seeds with differing epoch counts are truncated to
/// the common prefix with a warning. Throws ConfigError before writing anything
/// when a metrics file is missing or empty.
PlotResult plot_runs(const std::vector<std::string>& run_dirs, const std::string& output_dir,
                     const PlotOptions& options);

}  // namespace seps::harness
