#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "seps/common.hpp"
#include "seps/dual_solver.hpp"
#include "seps/env.hpp"
#include "seps/estimation.hpp"
#include "seps/policy.hpp"

namespace seps {

enum class Algorithm { seps, agt, hum, eps, seps_no_c0, seps_lin_no_c0 };

std::string to_string(Algorithm a);
/// Throws ConfigError on an unknown tag.
Algorithm parse_algorithm(const std::string& tag);

struct AlgoConfig {
  Algorithm algorithm = Algorithm::seps;
  /// Lower bound on J_R; required by seps.
  std::optional<double> d0;
  /// Upper bound on J_C1; required by every seps variant.
  std::optional<double> d1;
  double delta = 0.01;
  /// Reconciliation factor; when unset eps uses 2 and seps_lin_no_c0 uses 3.
  std::optional<double> reconciliation_lambda;
  double entropy_weight = 0.01;
  int epochs = 100;
  Eigen::Index steps_per_epoch = 4000;
  int workers = 1;
  int backtracks = 10;
  double backtrack_ratio = 0.5;
  double kl_slack = 1.5;
  double constraint_tol_rel = 0.05;
  double constraint_tol_abs = 0.01;
  double damping = 0.1;
  int cg_iterations = 100;
  double cg_tol = 1e-8;
  double gae_lambda = 0.95;
  bool discounted_constraints = true;
  /// When several constraints are violated: true sums the recovery steps,
  /// false recovers the most violated one first.
  bool combine_violations = true;
  /// Use every k-th batch state in the KL Hessian product.
  int hvp_stride = 1;

  double lambda_or_default() const;
  /// Throws ConfigError naming the first missing or invalid key.
  void validate() const;
};

enum class Objective { user, task, user_plus_task, eps_reshaped };

struct Wiring {
  Objective objective = Objective::user;
  bool use_c0 = false;
  bool use_c1 = false;
  double lambda = 0.0;

  int constraint_count() const { return int(use_c0) + int(use_c1); }
};

Wiring variant_wiring(const AlgoConfig& algo);

/// R_A + lambda * u_H + lambda * entropy_weight * H(pi(.|s_t)) per step.
Vector eps_objective_rewards(const TrajectoryBatch& batch, const Policy& policy, const Vector& params, double lambda,
                             double entropy_weight);

enum class Branch { feasible, recovery };
std::string to_string(Branch b);

struct EpochReport {
  int epoch = 0;
  /// Returns of the policy that collected this epoch's batch.
  double j_u = 0.0;
  double j_r = 0.0;
  double j_c1 = 0.0;
  double j_u_undiscounted = 0.0;
  double j_r_undiscounted = 0.0;
  double j_c1_undiscounted = 0.0;
  int episodes = 0;
  /// Surpluses used for branching (NaN for an absent constraint).
  double c0 = 0.0;
  double c1 = 0.0;
  Branch branch = Branch::feasible;
  DualCase dual_case = DualCase::none_active;
  /// The dual degenerated and the plain trust-region step was used.
  bool fallback = false;
  /// False when some violated constraint cannot reach feasibility inside the trust region.
  bool reachable = true;
  double kl = 0.0;
  double step_norm = 0.0;
  int backtracks = 0;
  bool accepted = false;
};

struct TrainResult {
  Vector params;
  std::vector<EpochReport> reports;
  bool halted = false;
  std::string diagnostic;
};

/// Called after each epoch with the report and the parameters after the update.
using EpochCallback = std::function<void(const EpochReport&, const Vector&)>;

TrainResult train(const Environment& env, const Policy& policy, const AlgoConfig& algo, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});
/// Starts from the given parameters instead of policy.initial_params.
TrainResult train(const Environment& env, const Policy& policy, Vector initial_params, const AlgoConfig& algo,
                  std::uint64_t seed, const EpochCallback& on_epoch = {});

}  // namespace seps
