#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "seps/engine.hpp"
#include "seps/env.hpp"
#include "seps/policy.hpp"

namespace seps::harness {

/// Raw key=value pairs with the line each came from ('#' starts a comment).
struct ConfigEntry {
  std::string value;
  std::string origin;  // "path:line" or "--key"
};
using ConfigMap = std::map<std::string, ConfigEntry>;

/// Throws ConfigError with "path:line: message" on malformed lines or repeated keys.
ConfigMap parse_config_text(const std::string& text, const std::string& source);
ConfigMap read_config_file(const std::string& path);
/// Overrides replace file entries; keys use the file spelling (dashes become underscores).
void apply_overrides(ConfigMap& map, const std::vector<std::pair<std::string, std::string>>& overrides);

/// Everything needed to reproduce a training command.
struct RunConfig {
  std::string env = "hazard-nav";
  HazardNav::Params hazard;
  ButtonNav::Params button;
  AlgoConfig algo;
  std::vector<int> hidden{32, 32};
  double init_log_std = -0.5;
  std::uint64_t seed = 1;
  int seeds = 1;
  /// Seeds run concurrently; results do not depend on it.
  int jobs = 1;
  int checkpoint_every = 0;
  std::string run_id;
  std::string output;

  std::vector<std::uint64_t> seed_list() const;
};

/// Resolves and validates a map. Unknown keys, bad values and keys missing for
/// the chosen algorithm raise ConfigError naming the key and its origin.
RunConfig resolve_config(const ConfigMap& map);

/// Canonical key=value text covering every setting; parsing it yields the same RunConfig.
std::string serialize_config(const RunConfig& config);

std::unique_ptr<Environment> make_environment(const RunConfig& config);
std::unique_ptr<Policy> make_policy_for(const Environment& env, const RunConfig& config);

/// Output root for runs without an explicit `output`: $SEPS_OUTPUT_ROOT or "runs".
std::string default_output_root();

}  // namespace seps::harness
