#include "seps/harness/run.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace seps::harness {

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{
      "run_id",  "algorithm",   "seed",       "epoch",  "J_u",        "J_R",      "J_C1",
      "J_u_undiscounted",       "J_R_undiscounted",     "J_C1_undiscounted",    "c0",       "c1",
      "branch",  "dual_case",   "fallback",   "kl",     "step_norm",  "backtracks", "accepted"};
  return cols;
}

std::string metrics_header() {
  std::string h;
  for (const auto& c : metrics_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

std::string metrics_row(const std::string& run_id, Algorithm algorithm, std::uint64_t seed, const EpochReport& r) {
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "%s,%s,%llu,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%s,%s,%d,%.17g,%.17g,%d,%d",
                run_id.c_str(), to_string(algorithm).c_str(), static_cast<unsigned long long>(seed), r.epoch, r.j_u,
                r.j_r, r.j_c1, r.j_u_undiscounted, r.j_r_undiscounted, r.j_c1_undiscounted, r.c0, r.c1,
                to_string(r.branch).c_str(), to_string(r.dual_case).c_str(), int(r.fallback), r.kl, r.step_norm,
                r.backtracks, int(r.accepted));
  return buf;
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open metrics file");
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw ConfigError(path + ": empty metrics file");
  if (line != metrics_header()) throw ConfigError(path + ": unexpected metrics header");
  std::vector<MetricsRecord> out;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != metrics_columns().size()) {
      throw ConfigError(path + ":" + std::to_string(number) + ": expected " +
                        std::to_string(metrics_columns().size()) + " columns");
    }
    MetricsRecord r;
    try {
      r.run_id = f[0];
      r.algorithm = f[1];
      r.seed = std::stoull(f[2]);
      r.epoch = std::stoi(f[3]);
      r.j_u = std::stod(f[4]);
      r.j_r = std::stod(f[5]);
      r.j_c1 = std::stod(f[6]);
      r.j_u_undiscounted = std::stod(f[7]);
      r.j_r_undiscounted = std::stod(f[8]);
      r.j_c1_undiscounted = std::stod(f[9]);
      r.branch = f[12];
      r.kl = std::stod(f[15]);
      r.accepted = f[18] == "1";
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(number) + ": malformed number");
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw ConfigError(path + ": metrics file has no rows");
  return out;
}

std::string run_directory(const RunConfig& config) {
  if (!config.output.empty()) return config.output;
  return (fs::path(default_output_root()) / config.run_id).string();
}

RunOutcome run_training(const RunConfig& config, std::ostream* log) {
  RunOutcome outcome;
  const fs::path dir = run_directory(config);
  outcome.directory = dir.string();
  fs::create_directories(dir / "seeds");
  fs::create_directories(dir / "checkpoints");
  {
    std::ofstream cfg(dir / "config.resolved");
    cfg << serialize_config(config);
  }

  const auto env = make_environment(config);
  const auto policy = make_policy_for(*env, config);
  const auto seeds = config.seed_list();
  outcome.results.resize(seeds.size());
  std::mutex log_mutex;

  auto run_seed = [&](std::size_t i) {
    const std::uint64_t seed = seeds[i];
    const fs::path csv_path = dir / "seeds" / ("seed_" + std::to_string(seed) + ".csv");
    std::ofstream csv(csv_path);
    csv << metrics_header() << "\n";
    const auto stem = [&](const std::string& tag) {
      return (dir / "checkpoints" / ("seed_" + std::to_string(seed) + "_" + tag)).string();
    };
    TrainResult result = train(*env, *policy, config.algo, seed, [&](const EpochReport& r, const Vector& theta) {
      csv << metrics_row(config.run_id, config.algo.algorithm, seed, r) << "\n";
      if (config.checkpoint_every > 0 && (r.epoch + 1) % config.checkpoint_every == 0) {
        save_checkpoint(stem("epoch_" + std::to_string(r.epoch + 1)), *policy, theta);
      }
      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        char buf[256];
        std::snprintf(buf, sizeof buf, "[%s seed %llu] epoch %d  J_u %.4f  J_R %.4f  J_C1 %.4f  %s%s\n",
                      config.run_id.c_str(), static_cast<unsigned long long>(seed), r.epoch, r.j_u, r.j_r, r.j_c1,
                      to_string(r.branch).c_str(), r.accepted ? "" : " (rejected)");
        *log << buf << std::flush;
      }
    });
    save_checkpoint(stem("final"), *policy, result.params);
    outcome.results[i] = std::move(result);
  };

  const std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(config.jobs), seeds.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run_seed(i);
  } else {
    std::vector<std::thread> pool;
    std::mutex next_mutex;
    std::size_t next = 0;
    std::vector<std::exception_ptr> errors(seeds.size());
    for (std::size_t w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        while (true) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(next_mutex);
            if (next >= seeds.size()) return;
            i = next++;
          }
          try {
            run_seed(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Merge per-seed files in seed order.
  std::ofstream merged(dir / "metrics.csv");
  merged << metrics_header() << "\n";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    std::ifstream part(dir / "seeds" / ("seed_" + std::to_string(seeds[i]) + ".csv"));
    std::string line;
    std::getline(part, line);
    while (std::getline(part, line)) merged << line << "\n";
    if (outcome.results[i].halted) {
      outcome.halted = true;
      outcome.diagnostics.push_back("seed " + std::to_string(seeds[i]) + ": " + outcome.results[i].diagnostic);
    }
  }
  if (outcome.halted) {
    std::ofstream diag(dir / "halted.txt");
    for (const auto& d : outcome.diagnostics) diag << d << "\n";
  }
  return outcome;
}

}  // namespace seps::harness
