#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "seps/engine.hpp"
#include "seps/harness/config.hpp"

namespace seps::harness {

/// Fixed metrics.csv column order.
const std::vector<std::string>& metrics_columns();
std::string metrics_header();
std::string metrics_row(const std::string& run_id, Algorithm algorithm, std::uint64_t seed, const EpochReport& r);

/// One parsed metrics.csv line.
struct MetricsRecord {
  std::string run_id;
  std::string algorithm;
  std::uint64_t seed = 0;
  int epoch = 0;
  double j_u = 0.0;
  double j_r = 0.0;
  double j_c1 = 0.0;
  double j_u_undiscounted = 0.0;
  double j_r_undiscounted = 0.0;
  double j_c1_undiscounted = 0.0;
  double kl = 0.0;
  bool accepted = false;
  std::string branch;
};

/// Throws ConfigError when the file is missing, empty or has a different header.
std::vector<MetricsRecord> read_metrics(const std::string& path);

struct RunOutcome {
  std::string directory;
  bool halted = false;
  /// Engine diagnostics of halted seeds.
  std::vector<std::string> diagnostics;
  std::vector<TrainResult> results;  // in seed order
};

/// Directory a config trains into: `output` when set, else <root>/<run_id>.
std::string run_directory(const RunConfig& config);

/// Trains every seed and writes config.resolved, per-seed CSVs under seeds/,
/// the merged metrics.csv and checkpoints under checkpoints/.
/// Progress lines go to `log` when non-null.
RunOutcome run_training(const RunConfig& config, std::ostream* log = nullptr);

}  // namespace seps::harness
