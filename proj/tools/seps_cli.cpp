#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "seps/common.hpp"
#include "seps/env.hpp"
#include "seps/harness/config.hpp"
#include "seps/harness/plot.hpp"
#include "seps/harness/run.hpp"
#include "seps/harness/verify.hpp"
#include "seps/oracle.hpp"

namespace fs = std::filesystem;
using namespace seps;
using namespace seps::harness;

namespace {

// "--key value" and "--key=value" pairs left over after CLI11 parsing.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() == 2) throw ConfigError("unexpected argument '" + arg + "'");
    const std::string body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("option '" + arg + "' needs a value");
      out.emplace_back(body, extras[++i]);
    }
  }
  return out;
}

// Arguments: [config] [--key value]...
int cmd_train(std::vector<std::string> args) {
  ConfigMap map;
  if (!args.empty() && args.front().rfind("--", 0) != 0) {
    map = read_config_file(args.front());
    args.erase(args.begin());
  }
  apply_overrides(map, parse_overrides(args));
  const RunConfig config = resolve_config(map);
  const RunOutcome outcome = run_training(config, &std::cerr);
  std::cout << outcome.directory << "\n";
  if (outcome.halted) {
    for (const auto& d : outcome.diagnostics) std::cerr << "halted: " << d << "\n";
    return 3;
  }
  return 0;
}

int cmd_plot(const std::vector<std::string>& runs, const std::string& output, bool undiscounted,
             std::optional<double> d0, std::optional<double> d1) {
  PlotOptions options;
  options.undiscounted = undiscounted;
  options.d0 = d0;
  options.d1 = d1;
  const PlotResult result = plot_runs(runs, output, options);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& f : result.files) std::cout << f << "\n";
  return 0;
}

int cmd_verify(const std::string& tag, std::string output) {
  const SuiteReport report = run_suite(tag);
  if (output.empty()) output = (fs::path(default_output_root()) / "verify").string();
  fs::create_directories(output);
  const fs::path txt = fs::path(output) / (tag + ".txt");
  const fs::path csv = fs::path(output) / (tag + ".csv");
  std::ofstream out(txt);
  out << "suite: " << tag << "\n";
  std::cout << "suite: " << tag << "\n";
  for (const auto& line : report.lines) {
    out << line << "\n";
    std::cout << line << "\n";
  }
  const char* verdict = report.passed ? "result: PASS" : "result: FAIL";
  out << verdict << "\n";
  std::cout << verdict << "\n";
  std::ofstream(csv) << report.csv;
  std::cout << "report: " << txt.string() << "\ntable: " << csv.string() << "\n";
  return report.passed ? 0 : 1;
}

int cmd_oracle(std::optional<double> d0, std::optional<double> d1) {
  const TabularCmdp env = make_chain_fixture();
  const double lo = d0.value_or(env.spec().d0());
  const double hi = d1.value_or(env.spec().cost_limit(0));
  const OracleResult r = enumerate_constrained_optimum(env, lo, hi);
  std::cout << oracle_report(r, lo, hi);
  std::cout << oracle_csv_header() << "\n" << oracle_csv_row(r) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe explicable policy search: training, plotting and verification"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train one algorithm on one environment for every seed");
  train->allow_extras();
  train->usage("seps train [CONFIG] [--key value]...");
  train->footer("CONFIG is an optional key = value file. Any config key can be given as --key value\n"
                "(dashes or underscores), e.g. --algo eps --lambda 2.");

  auto* plot = app.add_subcommand("plot", "write J_u, J_R and J_C1 charts from run directories");
  std::vector<std::string> runs;
  std::string plot_output = "plots";
  bool undiscounted = false;
  std::optional<double> plot_d0, plot_d1;
  plot->add_option("runs", runs, "run directories")->required();
  plot->add_option("-o,--output", plot_output, "output directory");
  plot->add_flag("--undiscounted", undiscounted, "plot undiscounted returns");
  plot->add_option("--d0", plot_d0, "J_R limit line (default from config.resolved)");
  plot->add_option("--d1", plot_d1, "J_C1 limit line (default from config.resolved)");

  auto* verify = app.add_subcommand("verify", "run an acceptance suite and write a report");
  std::string suite;
  std::string verify_output;
  verify->add_option("suite", suite, "dual-sweep | grad-check | tabular-oracle")
      ->required()
      ->check(CLI::IsMember({"dual-sweep", "grad-check", "tabular-oracle"}));
  verify->add_option("-o,--output", verify_output, "report directory (default <output root>/verify)");

  auto* oracle = app.add_subcommand("oracle", "enumerate deterministic policies of the chain fixture");
  std::optional<double> oracle_d0, oracle_d1;
  oracle->add_option("--d0", oracle_d0, "lower bound on J_R (default: fixture limit)");
  oracle->add_option("--d1", oracle_d1, "upper bound on J_C1 (default: fixture limit)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train->remaining());
    if (*plot) return cmd_plot(runs, plot_output, undiscounted, plot_d0, plot_d1);
    if (*verify) return cmd_verify(suite, verify_output);
    if (*oracle) return cmd_oracle(oracle_d0, oracle_d1);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
