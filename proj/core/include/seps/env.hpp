#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "seps/common.hpp"

namespace seps {

/// Static description of a constrained MDP: dimensions, discounting, episode
/// horizon, and the limits {d_0, d_1, ..., d_k}. limits[0] is the lower bound on
/// the task return; limits[i] for i >= 1 is the upper bound on cost stream i.
struct CmdpSpec {
  int state_dim = 1;
  int action_dim = 1;
  /// Zero for continuous actions; otherwise actions are single indices in [0, action_count).
  int action_count = 0;
  double gamma = 0.99;
  int horizon = 200;
  int cost_stream_count = 1;
  std::vector<double> limits{0.0, 0.0};

  bool discrete() const { return action_count > 0; }
  double d0() const { return limits.at(0); }
  double cost_limit(int i) const { return limits.at(static_cast<std::size_t>(i) + 1); }

  /// Throws ContractViolation when an invariant is broken.
  void validate() const;
};

struct Transition {
  Vector state;
  Vector action;
  Vector next_state;
  double reward_a = 0.0;
  Vector costs;
  double reward_u = 0.0;
  /// True when the episode terminated inside the environment (not a horizon cut).
  bool done = false;
};

/// A CMDP simulator. Implementations are immutable after construction: the
/// state is passed in and out explicitly, so one instance can serve several
/// rollout workers as long as each worker owns its generator.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual const CmdpSpec& spec() const = 0;
  virtual Vector reset(Rng& rng) const = 0;
  virtual Transition step(const Vector& state, const Vector& action, Rng& rng) const = 0;
};

// ---------------------------------------------------------------------------
// Tabular CMDP
// ---------------------------------------------------------------------------

/// Finite CMDP with explicit tables, used as the exactly-evaluable fixture.
/// States and actions travel through the Environment interface as 1-vectors
/// holding the index.
class TabularCmdp final : public Environment {
 public:
  /// transitions[a](s, s') = T(s' | s, a); reward tables are indexed the same
  /// way. Rows must sum to one within 1e-12.
  TabularCmdp(std::string name, std::vector<Matrix> transitions, std::vector<Matrix> task_reward,
              std::vector<Matrix> cost_reward, std::vector<Matrix> user_reward, Vector initial,
              double gamma, int horizon, std::vector<double> limits, std::vector<bool> terminal = {});

  std::string name() const override { return name_; }
  const CmdpSpec& spec() const override { return spec_; }
  Vector reset(Rng& rng) const override;
  Transition step(const Vector& state, const Vector& action, Rng& rng) const override;

  int state_count() const { return static_cast<int>(initial_.size()); }
  int action_count() const { return spec_.action_count; }
  const Matrix& transition(int a) const { return transitions_.at(static_cast<std::size_t>(a)); }
  const Matrix& task_reward(int a) const { return task_reward_.at(static_cast<std::size_t>(a)); }
  const Matrix& cost_reward(int a) const { return cost_reward_.at(static_cast<std::size_t>(a)); }
  const Matrix& user_reward(int a) const { return user_reward_.at(static_cast<std::size_t>(a)); }
  const Vector& initial_distribution() const { return initial_; }
  /// Entering a terminal state ends the episode; terminal states must be
  /// zero-reward self-loops so exact and sampled returns agree.
  bool is_terminal(int s) const { return terminal_.at(static_cast<std::size_t>(s)); }

 private:
  std::string name_;
  CmdpSpec spec_;
  std::vector<Matrix> transitions_;
  std::vector<Matrix> task_reward_;
  std::vector<Matrix> cost_reward_;
  std::vector<Matrix> user_reward_;
  Vector initial_;
  std::vector<bool> terminal_;
};

/// Exact discounted returns of a stationary policy table (rows = states,
/// columns = action probabilities).
struct ExactReturns {
  double task = 0.0;  // J_R
  double cost = 0.0;  // J_C1
  double user = 0.0;  // J_u
};

ExactReturns exact_policy_returns(const TabularCmdp& env, const Matrix& policy_table);

/// Deterministic 5-state chain with an explicable-but-unsafe shortcut; the
/// fixture used for SEPS-versus-enumeration checks.
TabularCmdp make_chain_fixture();

/// Seeded random tables (dense stochastic transitions, uniform rewards in
/// [0, 1)). Useful for Monte Carlo cross-checks.
TabularCmdp make_random_tabular(std::uint64_t seed, int states, int actions, double gamma = 0.9,
                                int horizon = 100);

// ---------------------------------------------------------------------------
// Continuous point-mass navigation
// ---------------------------------------------------------------------------

struct Disk {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;

  bool contains(double px, double py) const;
};

/// Layout and dynamics shared by the two point-mass tasks. Positions move by
/// step_size times the action clipped to [-1, 1] per axis, then are clamped to
/// the square arena [-arena, arena]^2.
struct PointNavLayout {
  std::array<double, 2> start{-2.0, 0.0};
  std::array<double, 2> goal{2.0, 0.0};
  double goal_radius = 0.3;
  double step_size = 0.1;
  double arena = 3.0;
  double gamma = 0.99;
  int horizon = 200;
  std::vector<double> limits{0.0, 2.5};
};

/// Goal reaching with hazard disks and fragile boxes. The agent pays cost 1 per
/// step inside a hazard and 1 per step in contact with a box. The user does not
/// know about hazards but expects boxes to be avoided: u_H is the same progress
/// signal as R_A minus 1 per box contact.
class HazardNav final : public Environment {
 public:
  struct Params {
    PointNavLayout layout;
    std::vector<Disk> hazards{{0.0, 0.0, 0.8}};
    std::vector<Disk> boxes{{-1.0, 0.0, 0.3}, {1.0, 0.0, 0.3}};
  };

  HazardNav();
  explicit HazardNav(Params params);

  std::string name() const override { return "hazard-nav"; }
  const CmdpSpec& spec() const override { return spec_; }
  Vector reset(Rng& rng) const override;
  Transition step(const Vector& state, const Vector& action, Rng& rng) const override;

  const Params& params() const { return params_; }

 private:
  Params params_;
  CmdpSpec spec_;
};

/// Position of a patrolling obstacle moving at constant speed around a closed
/// polyline of waypoints.
struct Gremlin {
  std::vector<std::array<double, 2>> waypoints;
  double speed = 0.05;
  double radius = 0.3;

  std::array<double, 2> position(int t) const;
};

/// Goal reaching with optional buttons and patrolling gremlins. State is
/// (x, y, pressed_1, pressed_2, t / horizon). R_A rewards progress toward the
/// goal (moving away is charged away_penalty times the distance), button presses
/// and reaching the goal. C_1 counts steps in collision with a gremlin. u_H
/// follows the user's expected route: progress toward the next unpressed button
/// (in order), then the goal, with bonuses for presses and for finishing with
/// every button pressed.
class ButtonNav final : public Environment {
 public:
  struct Params {
    PointNavLayout layout{{0.0, -2.0}, {0.0, 2.0}, 0.3, 0.15, 3.0, 0.99, 200, {0.0, 2.5}};
    std::vector<Disk> buttons{{0.9, -1.0, 0.3}, {-2.2, -2.4, 0.3}};
    std::vector<Gremlin> gremlins{
        Gremlin{{{-1.5, 0.6}, {1.5, 0.6}}, 0.06, 0.35},
    };
    double away_penalty = 2.0;
    double task_button_bonus = 0.5;
    double task_goal_bonus = 1.0;
    double user_button_bonus = 1.0;
    double user_goal_bonus = 1.0;
  };

  ButtonNav();
  explicit ButtonNav(Params params);

  std::string name() const override { return "button-nav"; }
  const CmdpSpec& spec() const override { return spec_; }
  Vector reset(Rng& rng) const override;
  Transition step(const Vector& state, const Vector& action, Rng& rng) const override;

  const Params& params() const { return params_; }

 private:
  Params params_;
  CmdpSpec spec_;
};

}  // namespace seps
