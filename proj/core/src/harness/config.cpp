#include "seps/harness/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace seps::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(trim(cur));
  return parts;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad(const std::string& key, const ConfigEntry& e, const std::string& why) {
  throw ConfigError(e.origin + ": " + key + ": " + why + " (got '" + e.value + "')");
}

double to_double(const std::string& key, const ConfigEntry& e) {
  char* end = nullptr;
  const double v = std::strtod(e.value.c_str(), &end);
  if (e.value.empty() || end != e.value.c_str() + e.value.size()) bad(key, e, "expected a number");
  return v;
}

long to_long(const std::string& key, const ConfigEntry& e) {
  char* end = nullptr;
  const long v = std::strtol(e.value.c_str(), &end, 10);
  if (e.value.empty() || end != e.value.c_str() + e.value.size()) bad(key, e, "expected an integer");
  return v;
}

bool to_bool(const std::string& key, const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  bad(key, e, "expected true or false");
}

std::vector<double> to_numbers(const std::string& key, const ConfigEntry& e, char sep) {
  std::vector<double> out;
  for (const auto& part : split(e.value, sep)) {
    if (part.empty()) continue;
    out.push_back(to_double(key, {part, e.origin}));
  }
  return out;
}

std::array<double, 2> to_point(const std::string& key, const ConfigEntry& e) {
  const auto v = to_numbers(key, e, ',');
  if (v.size() != 2) bad(key, e, "expected x,y");
  return {v[0], v[1]};
}

std::vector<Disk> to_disks(const std::string& key, const ConfigEntry& e) {
  std::vector<Disk> out;
  for (const auto& item : split(e.value, ';')) {
    if (item.empty()) continue;
    const auto v = to_numbers(key, {item, e.origin}, ',');
    if (v.size() != 3 || !(v[2] > 0.0)) bad(key, e, "expected 'x,y,r; ...' with r > 0");
    out.push_back({v[0], v[1], v[2]});
  }
  return out;
}

// "x,y x,y ... @ speed radius; ..."
std::vector<Gremlin> to_gremlins(const std::string& key, const ConfigEntry& e) {
  std::vector<Gremlin> out;
  for (const auto& item : split(e.value, ';')) {
    if (item.empty()) continue;
    const auto at = item.find('@');
    if (at == std::string::npos) bad(key, e, "expected 'x,y x,y ... @ speed radius'");
    Gremlin g;
    std::istringstream pts(item.substr(0, at));
    std::string p;
    while (pts >> p) g.waypoints.push_back(to_point(key, {p, e.origin}));
    const auto tail = to_numbers(key, {trim(item.substr(at + 1)), e.origin}, ' ');
    if (g.waypoints.empty() || tail.size() != 2 || !(tail[0] >= 0.0) || !(tail[1] > 0.0)) {
      bad(key, e, "expected at least one waypoint, speed >= 0 and radius > 0");
    }
    g.speed = tail[0];
    g.radius = tail[1];
    out.push_back(std::move(g));
  }
  return out;
}

std::string point_text(const std::array<double, 2>& p) { return fmt(p[0]) + "," + fmt(p[1]); }

std::string disks_text(const std::vector<Disk>& disks) {
  std::string s;
  for (std::size_t i = 0; i < disks.size(); ++i) {
    if (i) s += "; ";
    s += fmt(disks[i].x) + "," + fmt(disks[i].y) + "," + fmt(disks[i].radius);
  }
  return s;
}

std::string gremlins_text(const std::vector<Gremlin>& gs) {
  std::string s;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (i) s += "; ";
    for (const auto& w : gs[i].waypoints) s += point_text(w) + " ";
    s += "@ " + fmt(gs[i].speed) + " " + fmt(gs[i].radius);
  }
  return s;
}

const std::set<std::string> kLayoutKeys{"start", "goal", "goal_radius", "step_size", "arena", "gamma", "horizon"};
const std::set<std::string> kHazardKeys{"hazards", "boxes"};
const std::set<std::string> kButtonKeys{"buttons",           "gremlins",        "away_penalty", "task_button_bonus",
                                        "task_goal_bonus",   "user_button_bonus", "user_goal_bonus"};

void apply_layout(PointNavLayout& layout, const std::string& key, const ConfigEntry& e) {
  if (key == "start") layout.start = to_point(key, e);
  else if (key == "goal") layout.goal = to_point(key, e);
  else if (key == "goal_radius") layout.goal_radius = to_double(key, e);
  else if (key == "step_size") layout.step_size = to_double(key, e);
  else if (key == "arena") layout.arena = to_double(key, e);
  else if (key == "gamma") layout.gamma = to_double(key, e);
  else if (key == "horizon") layout.horizon = static_cast<int>(to_long(key, e));
}

}  // namespace

ConfigMap parse_config_text(const std::string& text, const std::string& source) {
  ConfigMap map;
  std::istringstream is(text);
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    const std::string origin = source + ":" + std::to_string(number);
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ": expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ": empty key");
    if (map.count(key)) throw ConfigError(origin + ": " + key + ": repeated key (first at " + map[key].origin + ")");
    map[key] = {trim(body.substr(eq + 1)), origin};
  }
  return map;
}

ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

void apply_overrides(ConfigMap& map, const std::vector<std::pair<std::string, std::string>>& overrides) {
  for (auto [key, value] : overrides) {
    for (char& c : key) if (c == '-') c = '_';
    map[key] = {value, "--" + key};
  }
}

std::vector<std::uint64_t> RunConfig::seed_list() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < seeds; ++i) out.push_back(seed + static_cast<std::uint64_t>(i));
  return out;
}

RunConfig resolve_config(const ConfigMap& map) {
  RunConfig c;
  if (auto it = map.find("env"); it != map.end()) c.env = it->second.value;
  if (c.env != "hazard-nav" && c.env != "button-nav" && c.env != "chain") {
    const ConfigEntry& e = map.at("env");
    bad("env", e, "expected hazard-nav, button-nav or chain");
  }
  AlgoConfig& a = c.algo;
  if (auto it = map.find("algo"); it != map.end()) {
    try {
      a.algorithm = parse_algorithm(it->second.value);
    } catch (const ConfigError& err) {
      throw ConfigError(it->second.origin + ": algo: " + err.what());
    }
  }

  using Handler = std::function<void(const std::string&, const ConfigEntry&)>;
  const std::map<std::string, Handler> general{
      {"env", [](auto&, auto&) {}},
      {"algo", [](auto&, auto&) {}},
      {"d0", [&](auto& k, auto& e) { a.d0 = to_double(k, e); }},
      {"d1", [&](auto& k, auto& e) { a.d1 = to_double(k, e); }},
      {"delta", [&](auto& k, auto& e) { a.delta = to_double(k, e); }},
      {"lambda", [&](auto& k, auto& e) { a.reconciliation_lambda = to_double(k, e); }},
      {"entropy_weight", [&](auto& k, auto& e) { a.entropy_weight = to_double(k, e); }},
      {"epochs", [&](auto& k, auto& e) { a.epochs = static_cast<int>(to_long(k, e)); }},
      {"steps_per_epoch", [&](auto& k, auto& e) { a.steps_per_epoch = to_long(k, e); }},
      {"workers", [&](auto& k, auto& e) { a.workers = static_cast<int>(to_long(k, e)); }},
      {"backtracks", [&](auto& k, auto& e) { a.backtracks = static_cast<int>(to_long(k, e)); }},
      {"backtrack_ratio", [&](auto& k, auto& e) { a.backtrack_ratio = to_double(k, e); }},
      {"kl_slack", [&](auto& k, auto& e) { a.kl_slack = to_double(k, e); }},
      {"constraint_tol_rel", [&](auto& k, auto& e) { a.constraint_tol_rel = to_double(k, e); }},
      {"constraint_tol_abs", [&](auto& k, auto& e) { a.constraint_tol_abs = to_double(k, e); }},
      {"damping", [&](auto& k, auto& e) { a.damping = to_double(k, e); }},
      {"cg_iterations", [&](auto& k, auto& e) { a.cg_iterations = static_cast<int>(to_long(k, e)); }},
      {"cg_tol", [&](auto& k, auto& e) { a.cg_tol = to_double(k, e); }},
      {"gae_lambda", [&](auto& k, auto& e) { a.gae_lambda = to_double(k, e); }},
      {"discounted_constraints", [&](auto& k, auto& e) { a.discounted_constraints = to_bool(k, e); }},
      {"combine_violations", [&](auto& k, auto& e) { a.combine_violations = to_bool(k, e); }},
      {"hvp_stride", [&](auto& k, auto& e) { a.hvp_stride = static_cast<int>(to_long(k, e)); }},
      {"hidden",
       [&](auto& k, auto& e) {
         c.hidden.clear();
         for (double v : to_numbers(k, e, ',')) {
           if (v < 1 || v != static_cast<int>(v)) bad(k, e, "expected positive integer layer widths");
           c.hidden.push_back(static_cast<int>(v));
         }
       }},
      {"init_log_std", [&](auto& k, auto& e) { c.init_log_std = to_double(k, e); }},
      {"seed",
       [&](auto& k, auto& e) {
         const long v = to_long(k, e);
         if (v < 0) bad(k, e, "must be non-negative");
         c.seed = static_cast<std::uint64_t>(v);
       }},
      {"seeds", [&](auto& k, auto& e) { c.seeds = static_cast<int>(to_long(k, e)); }},
      {"jobs", [&](auto& k, auto& e) { c.jobs = static_cast<int>(to_long(k, e)); }},
      {"checkpoint_every", [&](auto& k, auto& e) { c.checkpoint_every = static_cast<int>(to_long(k, e)); }},
      {"run_id", [&](auto&, auto& e) { c.run_id = e.value; }},
      {"output", [&](auto&, auto& e) { c.output = e.value; }},
  };

  for (const auto& [key, entry] : map) {
    if (auto h = general.find(key); h != general.end()) {
      h->second(key, entry);
      continue;
    }
    const bool layout = kLayoutKeys.count(key) > 0;
    if (c.env == "hazard-nav" && (layout || kHazardKeys.count(key))) {
      apply_layout(c.hazard.layout, key, entry);
      if (key == "hazards") c.hazard.hazards = to_disks(key, entry);
      if (key == "boxes") c.hazard.boxes = to_disks(key, entry);
      continue;
    }
    if (c.env == "button-nav" && (layout || kButtonKeys.count(key))) {
      ButtonNav::Params& b = c.button;
      apply_layout(b.layout, key, entry);
      if (key == "buttons") b.buttons = to_disks(key, entry);
      else if (key == "gremlins") b.gremlins = to_gremlins(key, entry);
      else if (key == "away_penalty") b.away_penalty = to_double(key, entry);
      else if (key == "task_button_bonus") b.task_button_bonus = to_double(key, entry);
      else if (key == "task_goal_bonus") b.task_goal_bonus = to_double(key, entry);
      else if (key == "user_button_bonus") b.user_button_bonus = to_double(key, entry);
      else if (key == "user_goal_bonus") b.user_goal_bonus = to_double(key, entry);
      continue;
    }
    if (layout || kHazardKeys.count(key) || kButtonKeys.count(key)) {
      throw ConfigError(entry.origin + ": " + key + ": does not apply to env " + c.env);
    }
    throw ConfigError(entry.origin + ": " + key + ": unknown key");
  }

  try {
    a.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  auto fail = [](const std::string& k, const std::string& why) { throw ConfigError("config: " + k + ": " + why); };
  if (c.seeds < 1) fail("seeds", "must be at least 1");
  if (c.jobs < 1) fail("jobs", "must be at least 1");
  if (c.checkpoint_every < 0) fail("checkpoint_every", "must be non-negative");
  if (c.hidden.empty()) fail("hidden", "needs at least one layer");
  for (PointNavLayout* l : {&c.hazard.layout, &c.button.layout}) {
    if (!(l->gamma > 0.0 && l->gamma < 1.0)) fail("gamma", "must lie strictly inside (0, 1)");
    if (l->horizon < 1) fail("horizon", "must be positive");
    if (!(l->step_size > 0.0)) fail("step_size", "must be positive");
    if (!(l->arena > 0.0)) fail("arena", "must be positive");
    if (!(l->goal_radius > 0.0)) fail("goal_radius", "must be positive");
    l->limits = {a.d0.value_or(0.0), a.d1.value_or(0.0)};
  }
  if (c.run_id.empty()) c.run_id = c.env + "-" + to_string(a.algorithm);
  for (char ch : c.run_id) {
    if (ch == ',' || ch == '/' || ch == '\n') fail("run_id", "must not contain ',', '/' or newlines");
  }
  return c;
}

std::string serialize_config(const RunConfig& c) {
  const AlgoConfig& a = c.algo;
  std::ostringstream os;
  os << "# resolved configuration\n";
  os << "env = " << c.env << "\n";
  os << "algo = " << to_string(a.algorithm) << "\n";
  if (a.d0) os << "d0 = " << fmt(*a.d0) << "\n";
  if (a.d1) os << "d1 = " << fmt(*a.d1) << "\n";
  os << "delta = " << fmt(a.delta) << "\n";
  if (a.reconciliation_lambda) os << "lambda = " << fmt(*a.reconciliation_lambda) << "\n";
  os << "entropy_weight = " << fmt(a.entropy_weight) << "\n";
  os << "epochs = " << a.epochs << "\n";
  os << "steps_per_epoch = " << a.steps_per_epoch << "\n";
  os << "workers = " << a.workers << "\n";
  os << "backtracks = " << a.backtracks << "\n";
  os << "backtrack_ratio = " << fmt(a.backtrack_ratio) << "\n";
  os << "kl_slack = " << fmt(a.kl_slack) << "\n";
  os << "constraint_tol_rel = " << fmt(a.constraint_tol_rel) << "\n";
  os << "constraint_tol_abs = " << fmt(a.constraint_tol_abs) << "\n";
  os << "damping = " << fmt(a.damping) << "\n";
  os << "cg_iterations = " << a.cg_iterations << "\n";
  os << "cg_tol = " << fmt(a.cg_tol) << "\n";
  os << "gae_lambda = " << fmt(a.gae_lambda) << "\n";
  os << "discounted_constraints = " << (a.discounted_constraints ? "true" : "false") << "\n";
  os << "combine_violations = " << (a.combine_violations ? "true" : "false") << "\n";
  os << "hvp_stride = " << a.hvp_stride << "\n";
  os << "hidden = ";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? "," : "") << c.hidden[i];
  os << "\n";
  os << "init_log_std = " << fmt(c.init_log_std) << "\n";
  os << "seed = " << c.seed << "\n";
  os << "seeds = " << c.seeds << "\n";
  os << "jobs = " << c.jobs << "\n";
  os << "checkpoint_every = " << c.checkpoint_every << "\n";
  os << "run_id = " << c.run_id << "\n";
  if (!c.output.empty()) os << "output = " << c.output << "\n";
  auto layout = [&](const PointNavLayout& l) {
    os << "start = " << point_text(l.start) << "\n";
    os << "goal = " << point_text(l.goal) << "\n";
    os << "goal_radius = " << fmt(l.goal_radius) << "\n";
    os << "step_size = " << fmt(l.step_size) << "\n";
    os << "arena = " << fmt(l.arena) << "\n";
    os << "gamma = " << fmt(l.gamma) << "\n";
    os << "horizon = " << l.horizon << "\n";
  };
  if (c.env == "hazard-nav") {
    layout(c.hazard.layout);
    os << "hazards = " << disks_text(c.hazard.hazards) << "\n";
    os << "boxes = " << disks_text(c.hazard.boxes) << "\n";
  } else if (c.env == "button-nav") {
    const ButtonNav::Params& b = c.button;
    layout(b.layout);
    os << "buttons = " << disks_text(b.buttons) << "\n";
    os << "gremlins = " << gremlins_text(b.gremlins) << "\n";
    os << "away_penalty = " << fmt(b.away_penalty) << "\n";
    os << "task_button_bonus = " << fmt(b.task_button_bonus) << "\n";
    os << "task_goal_bonus = " << fmt(b.task_goal_bonus) << "\n";
    os << "user_button_bonus = " << fmt(b.user_button_bonus) << "\n";
    os << "user_goal_bonus = " << fmt(b.user_goal_bonus) << "\n";
  }
  return os.str();
}

std::unique_ptr<Environment> make_environment(const RunConfig& c) {
  if (c.env == "hazard-nav") return std::make_unique<HazardNav>(c.hazard);
  if (c.env == "button-nav") return std::make_unique<ButtonNav>(c.button);
  return std::make_unique<TabularCmdp>(make_chain_fixture());
}

std::unique_ptr<Policy> make_policy_for(const Environment& env, const RunConfig& c) {
  const CmdpSpec& spec = env.spec();
  if (const auto* tab = dynamic_cast<const TabularCmdp*>(&env)) {
    return std::make_unique<SoftmaxTabularPolicy>(tab->state_count(), tab->action_count());
  }
  return std::make_unique<GaussianMlpPolicy>(spec.state_dim, spec.action_dim, c.hidden, c.init_log_std);
}

std::string default_output_root() {
  const char* root = std::getenv("SEPS_OUTPUT_ROOT");
  return (root && *root) ? std::string(root) : std::string("runs");
}

}  // namespace seps::harness
