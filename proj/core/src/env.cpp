#include "seps/env.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

namespace seps {

void CmdpSpec::validate() const {
  require(state_dim > 0, "CmdpSpec: state_dim must be positive");
  require(action_dim > 0, "CmdpSpec: action_dim must be positive");
  require(action_count >= 0, "CmdpSpec: action_count must be non-negative");
  require(gamma > 0.0 && gamma < 1.0, "CmdpSpec: gamma must lie strictly inside (0, 1)");
  require(horizon > 0, "CmdpSpec: horizon must be positive");
  require(cost_stream_count >= 0, "CmdpSpec: cost_stream_count must be non-negative");
  require(static_cast<int>(limits.size()) == cost_stream_count + 1,
          "CmdpSpec: expected one limit per cost stream plus d0");
}

// ---------------------------------------------------------------------------
// TabularCmdp
// ---------------------------------------------------------------------------

TabularCmdp::TabularCmdp(std::string name, std::vector<Matrix> transitions, std::vector<Matrix> task_reward,
                         std::vector<Matrix> cost_reward, std::vector<Matrix> user_reward, Vector initial,
                         double gamma, int horizon, std::vector<double> limits, std::vector<bool> terminal)
    : name_(std::move(name)),
      transitions_(std::move(transitions)),
      task_reward_(std::move(task_reward)),
      cost_reward_(std::move(cost_reward)),
      user_reward_(std::move(user_reward)),
      initial_(std::move(initial)),
      terminal_(std::move(terminal)) {
  const auto n = initial_.size();
  const auto actions = transitions_.size();
  require(n > 0 && actions > 0, "TabularCmdp: empty state or action set");
  require(task_reward_.size() == actions && cost_reward_.size() == actions && user_reward_.size() == actions,
          "TabularCmdp: one reward table per action expected");
  if (terminal_.empty()) terminal_.assign(static_cast<std::size_t>(n), false);
  require(terminal_.size() == static_cast<std::size_t>(n), "TabularCmdp: terminal flags size mismatch");
  for (std::size_t a = 0; a < actions; ++a) {
    for (const Matrix* m : {&transitions_[a], &task_reward_[a], &cost_reward_[a], &user_reward_[a]}) {
      require(m->rows() == n && m->cols() == n, "TabularCmdp: table shape mismatch");
    }
    require((transitions_[a].array() >= 0.0).all(), "TabularCmdp: negative transition probability");
    require((cost_reward_[a].array() >= 0.0).all(), "TabularCmdp: costs must be non-negative");
    for (Eigen::Index s = 0; s < n; ++s) {
      require(std::abs(transitions_[a].row(s).sum() - 1.0) <= 1e-12, "TabularCmdp: transition row must sum to 1");
    }
  }
  require((initial_.array() >= 0.0).all() && std::abs(initial_.sum() - 1.0) <= 1e-12,
          "TabularCmdp: initial distribution must sum to 1");

  spec_.state_dim = 1;
  spec_.action_dim = 1;
  spec_.action_count = static_cast<int>(actions);
  spec_.gamma = gamma;
  spec_.horizon = horizon;
  spec_.cost_stream_count = 1;
  spec_.limits = std::move(limits);
  spec_.validate();
}

namespace {

int sample_index(const Eigen::Ref<const Vector>& probabilities, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u = u01(rng);
  double cumulative = 0.0;
  const auto n = probabilities.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    cumulative += probabilities(i);
    if (u < cumulative) return static_cast<int>(i);
  }
  // Round-off: fall back to the last state with positive mass.
  for (Eigen::Index i = n; i-- > 0;) {
    if (probabilities(i) > 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(n - 1);
}

int checked_index(const Vector& v, int upper, const char* what) {
  if (v.size() != 1) throw ContractViolation(std::string("TabularCmdp: ") + what + " must be a 1-vector");
  const long i = std::lround(v(0));
  if (i < 0 || i >= upper || static_cast<double>(i) != v(0)) {
    throw ContractViolation(std::string("TabularCmdp: invalid ") + what + " index");
  }
  return static_cast<int>(i);
}

}  // namespace

Vector TabularCmdp::reset(Rng& rng) const { return Vector::Constant(1, sample_index(initial_, rng)); }

Transition TabularCmdp::step(const Vector& state, const Vector& action, Rng& rng) const {
  const int s = checked_index(state, state_count(), "state");
  const int a = checked_index(action, action_count(), "action");
  const auto ua = static_cast<std::size_t>(a);
  const int next = sample_index(transitions_[ua].row(s).transpose(), rng);
  Transition t;
  t.state = state;
  t.action = action;
  t.next_state = Vector::Constant(1, next);
  t.reward_a = task_reward_[ua](s, next);
  t.costs = Vector::Constant(1, cost_reward_[ua](s, next));
  t.reward_u = user_reward_[ua](s, next);
  t.done = terminal_[static_cast<std::size_t>(next)];
  return t;
}

ExactReturns exact_policy_returns(const TabularCmdp& env, const Matrix& policy_table) {
  const int n = env.state_count();
  const int m = env.action_count();
  require(policy_table.rows() == n && policy_table.cols() == m, "exact_policy_returns: policy table shape mismatch");
  for (int s = 0; s < n; ++s) {
    require(std::abs(policy_table.row(s).sum() - 1.0) <= 1e-9 && (policy_table.row(s).array() >= 0.0).all(),
            "exact_policy_returns: policy rows must be distributions");
  }
  Matrix p = Matrix::Zero(n, n);
  Matrix r = Matrix::Zero(n, 3);  // columns: task, cost, user
  for (int a = 0; a < m; ++a) {
    const Matrix& t = env.transition(a);
    const Vector w = policy_table.col(a);
    p += w.asDiagonal() * t;
    r.col(0) += w.cwiseProduct(t.cwiseProduct(env.task_reward(a)).rowwise().sum());
    r.col(1) += w.cwiseProduct(t.cwiseProduct(env.cost_reward(a)).rowwise().sum());
    r.col(2) += w.cwiseProduct(t.cwiseProduct(env.user_reward(a)).rowwise().sum());
  }
  const Matrix system = Matrix::Identity(n, n) - env.spec().gamma * p;
  const Eigen::PartialPivLU<Matrix> lu(system);
  const Matrix values = lu.solve(r);
  if (!values.allFinite()) throw NumericalFailure("exact_policy_returns: singular Bellman system");
  const Vector j = values.transpose() * env.initial_distribution();
  return {j(0), j(1), j(2)};
}

TabularCmdp make_chain_fixture() {
  // States: 0 start, 1 safe corridor, 2 hazard shortcut, 3 scenic spot, 4 goal (terminal).
  // Action 0 is the direct move, action 1 the alternative.
  constexpr int kStates = 5;
  const int next[kStates][2] = {{1, 2}, {4, 3}, {4, 3}, {4, 4}, {4, 4}};
  const double task[kStates][2] = {{0.0, 0.0}, {1.0, -0.2}, {1.0, 0.0}, {1.0, 0.2}, {0.0, 0.0}};
  const double cost[kStates][2] = {{0.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
  const double user[kStates][2] = {{0.25, 0.5}, {0.0, 0.75}, {0.25, 0.75}, {0.5, 1.0}, {0.0, 0.0}};
  std::vector<Matrix> t(2, Matrix::Zero(kStates, kStates));
  std::vector<Matrix> rt(2, Matrix::Zero(kStates, kStates));
  std::vector<Matrix> rc(2, Matrix::Zero(kStates, kStates));
  std::vector<Matrix> ru(2, Matrix::Zero(kStates, kStates));
  for (int s = 0; s < kStates; ++s) {
    for (int a = 0; a < 2; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      const int sp = next[s][a];
      t[ua](s, sp) = 1.0;
      rt[ua](s, sp) = task[s][a];
      rc[ua](s, sp) = cost[s][a];
      ru[ua](s, sp) = user[s][a];
    }
  }
  Vector rho = Vector::Zero(kStates);
  rho(0) = 1.0;
  return TabularCmdp("chain5", std::move(t), std::move(rt), std::move(rc), std::move(ru), std::move(rho), 0.9,
                     20, {0.6, 0.05}, {false, false, false, false, true});
}

TabularCmdp make_random_tabular(std::uint64_t seed, int states, int actions, double gamma, int horizon) {
  require(states > 0 && actions > 0, "make_random_tabular: empty sizes");
  Rng rng = make_rng(seed, 0x7ab1e);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto random_table = [&](bool stochastic) {
    Matrix m(states, states);
    for (int i = 0; i < states; ++i) {
      for (int j = 0; j < states; ++j) m(i, j) = u01(rng);
      if (stochastic) m.row(i) /= m.row(i).sum();
    }
    return m;
  };
  std::vector<Matrix> t;
  std::vector<Matrix> rt;
  std::vector<Matrix> rc;
  std::vector<Matrix> ru;
  for (int a = 0; a < actions; ++a) {
    Matrix p = random_table(true);
    // Renormalize once more so rows sum to one to machine precision.
    for (int i = 0; i < states; ++i) {
      p(i, states - 1) = 0.0;
      p(i, states - 1) = 1.0 - p.row(i).sum();
    }
    t.push_back(std::move(p));
    rt.push_back(random_table(false));
    rc.push_back(random_table(false));
    ru.push_back(random_table(false));
  }
  Vector rho = Vector::Zero(states);
  rho(0) = 1.0;
  return TabularCmdp("random" + std::to_string(states) + "x" + std::to_string(actions), std::move(t), std::move(rt),
                     std::move(rc), std::move(ru), std::move(rho), gamma, horizon, {0.0, 1.0});
}

// ---------------------------------------------------------------------------
// Point-mass navigation
// ---------------------------------------------------------------------------

bool Disk::contains(double px, double py) const {
  const double dx = px - x;
  const double dy = py - y;
  return dx * dx + dy * dy <= radius * radius;
}

namespace {

CmdpSpec point_nav_spec(const PointNavLayout& layout, int state_dim) {
  CmdpSpec spec;
  spec.state_dim = state_dim;
  spec.action_dim = 2;
  spec.action_count = 0;
  spec.gamma = layout.gamma;
  spec.horizon = layout.horizon;
  spec.cost_stream_count = 1;
  spec.limits = layout.limits;
  spec.validate();
  return spec;
}

std::array<double, 2> move_point(const PointNavLayout& layout, double x, double y, const Vector& action) {
  require(action.size() == 2, "point-nav: action must have two components");
  const double ax = std::clamp(action(0), -1.0, 1.0);
  const double ay = std::clamp(action(1), -1.0, 1.0);
  return {std::clamp(x + layout.step_size * ax, -layout.arena, layout.arena),
          std::clamp(y + layout.step_size * ay, -layout.arena, layout.arena)};
}

double distance(double x, double y, const std::array<double, 2>& p) { return std::hypot(x - p[0], y - p[1]); }

}  // namespace

HazardNav::HazardNav() : HazardNav(Params{}) {}

HazardNav::HazardNav(Params params) : params_(std::move(params)), spec_(point_nav_spec(params_.layout, 2)) {}

Vector HazardNav::reset(Rng& /*rng*/) const {
  Vector s(2);
  s << params_.layout.start[0], params_.layout.start[1];
  return s;
}

Transition HazardNav::step(const Vector& state, const Vector& action, Rng& /*rng*/) const {
  require(state.size() == 2, "HazardNav::step: state must have two components");
  const auto& layout = params_.layout;
  const auto [nx, ny] = move_point(layout, state(0), state(1), action);
  const double progress = distance(state(0), state(1), layout.goal) - distance(nx, ny, layout.goal);

  double hazard = 0.0;
  for (const auto& h : params_.hazards) {
    if (h.contains(nx, ny)) {
      hazard = 1.0;
      break;
    }
  }
  double contacts = 0.0;
  for (const auto& b : params_.boxes) contacts += b.contains(nx, ny) ? 1.0 : 0.0;

  Transition t;
  t.state = state;
  t.action = action;
  t.next_state = Vector(2);
  t.next_state << nx, ny;
  t.reward_a = progress;
  t.costs = Vector::Constant(1, hazard + contacts);
  t.reward_u = progress - contacts;
  t.done = distance(nx, ny, layout.goal) <= layout.goal_radius;
  return t;
}

std::array<double, 2> Gremlin::position(int t) const {
  require(!waypoints.empty(), "Gremlin: no waypoints");
  if (waypoints.size() == 1) return waypoints.front();
  double perimeter = 0.0;
  const std::size_t n = waypoints.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = waypoints[i];
    const auto& b = waypoints[(i + 1) % n];
    perimeter += std::hypot(b[0] - a[0], b[1] - a[1]);
  }
  if (perimeter <= 0.0) return waypoints.front();
  double arc = std::fmod(speed * t, perimeter);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = waypoints[i];
    const auto& b = waypoints[(i + 1) % n];
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    if (arc <= len && len > 0.0) {
      const double f = arc / len;
      return {a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])};
    }
    arc -= len;
  }
  return waypoints.front();
}

ButtonNav::ButtonNav() : ButtonNav(Params{}) {}

ButtonNav::ButtonNav(Params params) : params_(std::move(params)), spec_(point_nav_spec(params_.layout, 5)) {
  require(params_.buttons.size() == 2, "ButtonNav: exactly two buttons are supported");
  require(params_.away_penalty >= 0.0, "ButtonNav: away_penalty must be non-negative");
}

Vector ButtonNav::reset(Rng& /*rng*/) const {
  Vector s = Vector::Zero(5);
  s(0) = params_.layout.start[0];
  s(1) = params_.layout.start[1];
  return s;
}

Transition ButtonNav::step(const Vector& state, const Vector& action, Rng& /*rng*/) const {
  require(state.size() == 5, "ButtonNav::step: state must have five components");
  const auto& layout = params_.layout;
  const int t = static_cast<int>(std::lround(state(4) * layout.horizon));
  const auto [nx, ny] = move_point(layout, state(0), state(1), action);
  std::array<bool, 2> pressed{state(2) > 0.5, state(3) > 0.5};

  const double goal_progress = distance(state(0), state(1), layout.goal) - distance(nx, ny, layout.goal);
  double reward_a = goal_progress >= 0.0 ? goal_progress : params_.away_penalty * goal_progress;

  // The user's route: buttons in order, then the goal.
  std::array<double, 2> target = layout.goal;
  for (std::size_t i = 0; i < 2; ++i) {
    if (!pressed[i]) {
      target = {params_.buttons[i].x, params_.buttons[i].y};
      break;
    }
  }
  double reward_u = distance(state(0), state(1), target) - distance(nx, ny, target);

  for (std::size_t i = 0; i < 2; ++i) {
    if (!pressed[i] && params_.buttons[i].contains(nx, ny)) {
      pressed[i] = true;
      reward_a += params_.task_button_bonus;
      reward_u += params_.user_button_bonus;
    }
  }

  double collisions = 0.0;
  for (const auto& g : params_.gremlins) {
    const auto p = g.position(t + 1);
    if (std::hypot(nx - p[0], ny - p[1]) <= g.radius) collisions += 1.0;
  }

  const bool at_goal = distance(nx, ny, layout.goal) <= layout.goal_radius;
  if (at_goal) {
    reward_a += params_.task_goal_bonus;
    if (pressed[0] && pressed[1]) reward_u += params_.user_goal_bonus;
  }

  Transition tr;
  tr.state = state;
  tr.action = action;
  tr.next_state = Vector(5);
  tr.next_state << nx, ny, pressed[0] ? 1.0 : 0.0, pressed[1] ? 1.0 : 0.0,
      static_cast<double>(t + 1) / layout.horizon;
  tr.reward_a = reward_a;
  tr.costs = Vector::Constant(1, collisions);
  tr.reward_u = reward_u;
  tr.done = at_goal;
  return tr;
}

}  // namespace seps
