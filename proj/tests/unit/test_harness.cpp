#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <gtest/gtest.h>

#include "seps/harness/config.hpp"
#include "seps/harness/plot.hpp"
#include "seps/harness/run.hpp"

using namespace seps;
using namespace seps::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("seps_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig chain_config(const fs::path& out, int seeds, int epochs) {
  ConfigMap m = parse_config_text(
      "env = chain\nalgo = seps\nd0 = 0.6\nd1 = 0.05\nsteps_per_epoch = 300\n", "test.conf");
  apply_overrides(m, {{"epochs", std::to_string(epochs)}, {"seeds", std::to_string(seeds)}, {"output", out.string()}});
  return resolve_config(m);
}

std::string config_error(const std::string& text) {
  try {
    resolve_config(parse_config_text(text, "x.conf"));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Harness, ParsesCommentsAndWhitespace) {
  const ConfigMap m = parse_config_text("# header\n\n  env =  hazard-nav  # trailing\nalgo=hum\n", "a.conf");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at("env").value, "hazard-nav");
  EXPECT_EQ(m.at("env").origin, "a.conf:3");
  EXPECT_EQ(m.at("algo").value, "hum");
}

TEST(Harness, MalformedLineNamesTheLine) {
  try {
    parse_config_text("env = chain\nthis line has no equals\n", "b.conf");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("b.conf:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config_text("seed = 1\nseed = 2\n", "c.conf"), ConfigError);
}

TEST(Harness, MissingD1NamesKey) {
  const std::string msg = config_error("env = hazard-nav\nalgo = seps\nd0 = 0.0\n");
  EXPECT_NE(msg.find("d1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("seps"), std::string::npos) << msg;
}

TEST(Harness, UnknownAndMisplacedKeys) {
  EXPECT_NE(config_error("env = chain\nalgo = hum\nfrobnicate = 1\n").find("frobnicate"), std::string::npos);
  EXPECT_NE(config_error("env = hazard-nav\nalgo = hum\ngremlins = 0,0 1,0 @ 0.1 0.2\n").find("gremlins"),
            std::string::npos);
  EXPECT_NE(config_error("env = hazard-nav\nalgo = hum\ndelta = abc\n").find("x.conf:3"), std::string::npos);
  EXPECT_NE(config_error("env = moon\nalgo = hum\n").find("moon"), std::string::npos);
  EXPECT_NE(config_error("env = chain\nalgo = trpo\n").find("trpo"), std::string::npos);
}

TEST(Harness, OverridesReplaceFileValues) {
  ConfigMap m = parse_config_text("env = hazard-nav\nalgo = seps\nd0 = 0\nd1 = 2.5\n", "f.conf");
  apply_overrides(m, {{"algo", "eps"}, {"lambda", "2"}, {"steps-per-epoch", "1000"}});
  const RunConfig c = resolve_config(m);
  EXPECT_EQ(c.algo.algorithm, Algorithm::eps);
  EXPECT_EQ(c.algo.lambda_or_default(), 2.0);
  EXPECT_EQ(c.algo.steps_per_epoch, 1000);
  EXPECT_EQ(m.at("algo").origin, "--algo");
}

TEST(Harness, ButtonLayoutKeysParse) {
  const RunConfig c = resolve_config(parse_config_text(
      "env = button-nav\nalgo = hum\ngoal = 0.5,1.5\nbuttons = 1,1,0.2; -1,-1,0.25\n"
      "gremlins = 0,0 1,0 1,1 @ 0.07 0.3; -2,0 @ 0 0.5\n",
      "g.conf"));
  EXPECT_EQ(c.button.layout.goal[0], 0.5);
  ASSERT_EQ(c.button.buttons.size(), 2u);
  EXPECT_EQ(c.button.buttons[1].radius, 0.25);
  ASSERT_EQ(c.button.gremlins.size(), 2u);
  EXPECT_EQ(c.button.gremlins[0].waypoints.size(), 3u);
  EXPECT_EQ(c.button.gremlins[0].speed, 0.07);
  EXPECT_EQ(c.button.gremlins[1].radius, 0.5);
}

TEST(Harness, SerializedConfigRoundTrips) {
  const RunConfig c = resolve_config(parse_config_text(
      "env = hazard-nav\nalgo = seps\nd0 = 0.1\nd1 = 2.5\nhazards = 0.1,0.2,0.7\ndelta = 0.013\nhidden = 8,4\n",
      "h.conf"));
  const std::string text = serialize_config(c);
  const RunConfig again = resolve_config(parse_config_text(text, "config.resolved"));
  EXPECT_EQ(serialize_config(again), text);
  EXPECT_EQ(again.hazard.hazards.front().radius, 0.7);
  EXPECT_EQ(again.algo.delta, 0.013);
}

TEST(Harness, LimitsFlowIntoEnvironment) {
  const RunConfig c = resolve_config(parse_config_text("env = button-nav\nalgo = seps\nd0 = 0\nd1 = 2.5\n", "i"));
  const auto env = make_environment(c);
  EXPECT_EQ(env->spec().d0(), 0.0);
  EXPECT_EQ(env->spec().cost_limit(0), 2.5);
}

TEST(Harness, MetricsRowRoundTrips) {
  EpochReport r;
  r.epoch = 7;
  r.j_u = 1.0 / 3.0;
  r.j_r = -0.25;
  r.j_c1 = 2.5;
  r.kl = 0.0123;
  r.accepted = true;
  r.branch = Branch::recovery;
  const std::string row = metrics_row("run", Algorithm::seps, 3, r);
  const fs::path dir = fresh_dir("csv");
  fs::create_directories(dir);
  std::ofstream(dir / "m.csv") << metrics_header() << "\n" << row << "\n";
  const auto recs = read_metrics((dir / "m.csv").string());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].j_u, 1.0 / 3.0);
  EXPECT_EQ(recs[0].epoch, 7);
  EXPECT_EQ(recs[0].seed, 3u);
  EXPECT_EQ(recs[0].branch, "recovery");
  EXPECT_TRUE(recs[0].accepted);
}

TEST(Harness, TrainWritesOneSeriesPerSeed) {
  const fs::path dir = fresh_dir("train");
  RunConfig c = chain_config(dir, 3, 4);
  c.jobs = 2;
  const RunOutcome out = run_training(c);
  EXPECT_FALSE(out.halted);
  EXPECT_TRUE(fs::exists(dir / "config.resolved"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "seed_3_final.f64"));
  const auto rows = read_metrics((dir / "metrics.csv").string());
  ASSERT_EQ(rows.size(), 12u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].seed, 1u + i / 4);
    EXPECT_EQ(rows[i].epoch, int(i % 4));
  }
}

TEST(Harness, MetricsAreIndependentOfJobCount) {
  const fs::path a = fresh_dir("jobs1"), b = fresh_dir("jobs3");
  RunConfig ca = chain_config(a, 3, 5);
  RunConfig cb = chain_config(b, 3, 5);
  cb.jobs = 3;
  run_training(ca);
  run_training(cb);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
}

TEST(Harness, PlotWritesChartsWithLimitLine) {
  const fs::path dir = fresh_dir("plot_run"), out = fresh_dir("plot_out");
  run_training(chain_config(dir, 2, 3));
  const PlotResult r = plot_runs({dir.string()}, out.string(), {});
  ASSERT_EQ(r.files.size(), 3u);
  const std::string c1 = slurp(out / "J_C1.svg");
  EXPECT_NE(c1.find("d1 = 0.05"), std::string::npos);
  EXPECT_NE(c1.find("stroke-dasharray"), std::string::npos);
  EXPECT_EQ(slurp(out / "J_u.svg").find("stroke-dasharray"), std::string::npos);
  // Identical inputs give identical files.
  const fs::path out2 = fresh_dir("plot_out2");
  plot_runs({dir.string()}, out2.string(), {});
  EXPECT_EQ(slurp(out / "J_R.svg"), slurp(out2 / "J_R.svg"));
}

TEST(Harness, PlotLimitFromOptions) {
  const fs::path dir = fresh_dir("plot_opt"), out = fresh_dir("plot_opt_out");
  run_training(chain_config(dir, 1, 2));
  PlotOptions o;
  o.d1 = 2.5;
  plot_runs({dir.string()}, out.string(), o);
  EXPECT_NE(slurp(out / "J_C1.svg").find("d1 = 2.5"), std::string::npos);
}

TEST(Harness, SingleSeedBandCollapsesToLine) {
  const fs::path dir = fresh_dir("band"), out = fresh_dir("band_out");
  run_training(chain_config(dir, 1, 4));
  plot_runs({dir.string()}, out.string(), {});
  const std::string svg = slurp(out / "J_u.svg");
  std::smatch poly, line;
  ASSERT_TRUE(std::regex_search(svg, poly, std::regex("<polygon points=\"([^\"]*)\"")));
  ASSERT_TRUE(std::regex_search(svg, line, std::regex("<polyline points=\"([^\"]*)\"")));
  std::vector<std::string> band, mean;
  std::stringstream ps(poly[1].str()), ls(line[1].str());
  for (std::string t; ps >> t;) band.push_back(t);
  for (std::string t; ls >> t;) mean.push_back(t);
  ASSERT_EQ(band.size(), 2 * mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    EXPECT_EQ(band[i], mean[i]);
    EXPECT_EQ(band[band.size() - 1 - i], mean[i]);
  }
}

TEST(Harness, MismatchedEpochsTruncateWithWarning) {
  const fs::path dir = fresh_dir("trunc"), out = fresh_dir("trunc_out");
  run_training(chain_config(dir, 2, 4));
  // Drop the last epoch of seed 2.
  std::string text = slurp(dir / "metrics.csv");
  text = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  std::ofstream(dir / "metrics.csv") << text;
  const PlotResult r = plot_runs({dir.string()}, out.string(), {});
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("3 epochs"), std::string::npos) << r.warnings[0];
}

TEST(Harness, EmptyCsvIsAnErrorAndWritesNothing) {
  const fs::path dir = fresh_dir("empty"), out = fresh_dir("empty_out");
  fs::create_directories(dir);
  std::ofstream(dir / "metrics.csv") << "";
  EXPECT_THROW(plot_runs({dir.string()}, out.string(), {}), ConfigError);
  EXPECT_FALSE(fs::exists(out));
  std::ofstream(dir / "metrics.csv") << metrics_header() << "\n";
  EXPECT_THROW(plot_runs({dir.string()}, out.string(), {}), ConfigError);
  EXPECT_FALSE(fs::exists(out));
}
