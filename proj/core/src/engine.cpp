#include "seps/engine.hpp"

#include <cmath>
#include <limits>

#include "seps/trust_region.hpp"

namespace seps {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::seps: return "seps";
    case Algorithm::agt: return "agt";
    case Algorithm::hum: return "hum";
    case Algorithm::eps: return "eps";
    case Algorithm::seps_no_c0: return "seps_no_c0";
    case Algorithm::seps_lin_no_c0: return "seps_lin_no_c0";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& tag) {
  for (Algorithm a : {Algorithm::seps, Algorithm::agt, Algorithm::hum, Algorithm::eps, Algorithm::seps_no_c0,
                      Algorithm::seps_lin_no_c0}) {
    if (to_string(a) == tag) return a;
  }
  throw ConfigError("unknown algorithm '" + tag + "' (expected seps, agt, hum, eps, seps_no_c0, seps_lin_no_c0)");
}

std::string to_string(Branch b) { return b == Branch::feasible ? "feasible" : "recovery"; }

double AlgoConfig::lambda_or_default() const {
  if (reconciliation_lambda) return *reconciliation_lambda;
  if (algorithm == Algorithm::eps) return 2.0;
  if (algorithm == Algorithm::seps_lin_no_c0) return 3.0;
  return 0.0;
}

void AlgoConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
  const Wiring w = variant_wiring(*this);
  if (w.use_c0 && !d0) fail("d0", "missing; required by algorithm " + to_string(algorithm));
  if (w.use_c1 && !d1) fail("d1", "missing; required by algorithm " + to_string(algorithm));
  if (!(delta > 0.0)) fail("delta", "must be positive");
  if (epochs < 0) fail("epochs", "must be non-negative");
  if (steps_per_epoch < 1) fail("steps_per_epoch", "must be positive");
  if (workers < 1) fail("workers", "must be at least 1");
  if (backtracks < 0) fail("backtracks", "must be non-negative");
  if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0)) fail("backtrack_ratio", "must lie in (0, 1)");
  if (!(kl_slack >= 1.0)) fail("kl_slack", "must be at least 1");
  if (!(constraint_tol_rel >= 0.0)) fail("constraint_tol_rel", "must be non-negative");
  if (!(constraint_tol_abs >= 0.0)) fail("constraint_tol_abs", "must be non-negative");
  if (!(damping >= 0.0)) fail("damping", "must be non-negative");
  if (cg_iterations < 1) fail("cg_iterations", "must be positive");
  if (!(cg_tol > 0.0)) fail("cg_tol", "must be positive");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda", "must lie in [0, 1]");
  if (!(entropy_weight >= 0.0)) fail("entropy_weight", "must be non-negative");
  if (!(lambda_or_default() >= 0.0)) fail("lambda", "must be non-negative");
  if (hvp_stride < 1) fail("hvp_stride", "must be at least 1");
}

Wiring variant_wiring(const AlgoConfig& algo) {
  Wiring w;
  w.lambda = algo.lambda_or_default();
  switch (algo.algorithm) {
    case Algorithm::seps: w = {Objective::user, true, true, w.lambda}; break;
    case Algorithm::seps_no_c0: w = {Objective::user, false, true, w.lambda}; break;
    case Algorithm::seps_lin_no_c0: w = {Objective::user_plus_task, false, true, w.lambda}; break;
    case Algorithm::agt: w = {Objective::task, false, false, w.lambda}; break;
    case Algorithm::hum: w = {Objective::user, false, false, w.lambda}; break;
    case Algorithm::eps: w = {Objective::eps_reshaped, false, false, w.lambda}; break;
  }
  return w;
}

Vector eps_objective_rewards(const TrajectoryBatch& batch, const Policy& policy, const Vector& params, double lambda,
                             double entropy_weight) {
  Vector r = batch.rewards.at(kTaskStream) + lambda * batch.rewards.at(kUserStream);
  if (lambda != 0.0 && entropy_weight != 0.0) r += (lambda * entropy_weight) * policy.entropies(params, batch.states);
  return r;
}

TrainResult train(const Environment& env, const Policy& policy, const AlgoConfig& algo, std::uint64_t seed,
                  const EpochCallback& on_epoch) {
  Rng init_rng = make_rng(seed, 0);
  return train(env, policy, policy.initial_params(init_rng), algo, seed, on_epoch);
}

namespace {

Vector estimate_advantages(ValueFunction& vf, const TrajectoryBatch& batch, const Vector& rewards, double gamma,
                           double gae_lambda, Rng& rng) {
  const Vector values = vf.predict(batch.states);
  const Vector next_values = vf.predict(batch.next_states);
  Vector adv = gae_advantages(batch, rewards, values, next_values, gamma, gae_lambda);
  vf.fit(batch.states, adv + values, rng);
  return adv;
}

Matrix strided_columns(const Matrix& m, int stride) {
  if (stride <= 1) return m;
  const Eigen::Index n = (m.cols() + stride - 1) / stride;
  Matrix out(m.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) out.col(j) = m.col(j * stride);
  return out;
}

}  // namespace

TrainResult train(const Environment& env, const Policy& policy, Vector initial_params, const AlgoConfig& algo,
                  std::uint64_t seed, const EpochCallback& on_epoch) {
  algo.validate();
  const CmdpSpec& env_spec = env.spec();
  require(initial_params.size() == policy.param_count(), "train: initial parameters have the wrong length");
  const Wiring wiring = variant_wiring(algo);
  require(!wiring.use_c1 || env_spec.cost_stream_count >= 1, "train: algorithm needs a cost stream");

  CmdpSpec spec = env_spec;
  spec.limits.assign(static_cast<std::size_t>(1 + spec.cost_stream_count), 0.0);
  spec.limits[0] = algo.d0.value_or(0.0);
  if (spec.cost_stream_count >= 1) spec.limits[1] = algo.d1.value_or(0.0);

  const double gamma = spec.gamma;
  const double constraint_scale = 1.0 / (1.0 - gamma);
  const double tol0 = algo.constraint_tol_rel * std::abs(spec.limits[0]) + algo.constraint_tol_abs;
  const double tol1 =
      spec.cost_stream_count >= 1 ? algo.constraint_tol_rel * std::abs(spec.limits[1]) + algo.constraint_tol_abs : 0.0;

  Rng collect_rng = make_rng(seed, 1);
  Rng vf_rng = make_rng(seed, 2);
  auto objective_vf = make_value_function(env, vf_rng);
  auto task_vf = wiring.use_c0 ? make_value_function(env, vf_rng) : nullptr;
  auto cost_vf = wiring.use_c1 ? make_value_function(env, vf_rng) : nullptr;

  TrainResult result;
  result.params = std::move(initial_params);
  Vector& theta = result.params;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (int epoch = 0; epoch < algo.epochs; ++epoch) {
    TrajectoryBatch batch = collect(env, policy, theta, {algo.steps_per_epoch, algo.workers}, collect_rng);
    EpochReport rep;
    rep.epoch = epoch;
    rep.episodes = batch.completed_episodes();
    rep.j_u = batch.mean_return(kUserStream, true);
    rep.j_r = batch.mean_return(kTaskStream, true);
    rep.j_u_undiscounted = batch.mean_return(kUserStream, false);
    rep.j_r_undiscounted = batch.mean_return(kTaskStream, false);
    if (spec.cost_stream_count >= 1) {
      rep.j_c1 = batch.mean_return(cost_stream(0), true);
      rep.j_c1_undiscounted = batch.mean_return(cost_stream(0), false);
    }
    const std::vector<double> surplus = constraint_surpluses(batch, spec, algo.discounted_constraints);
    rep.c0 = wiring.use_c0 ? surplus[0] : nan;
    rep.c1 = wiring.use_c1 ? surplus[1] : nan;

    Vector objective_rewards;
    switch (wiring.objective) {
      case Objective::user: objective_rewards = batch.rewards[kUserStream]; break;
      case Objective::task: objective_rewards = batch.rewards[kTaskStream]; break;
      case Objective::user_plus_task:
        objective_rewards = batch.rewards[kUserStream] + wiring.lambda * batch.rewards[kTaskStream];
        break;
      case Objective::eps_reshaped:
        objective_rewards = eps_objective_rewards(batch, policy, theta, wiring.lambda, algo.entropy_weight);
        break;
    }
    const Vector adv_obj = normalize(
        estimate_advantages(*objective_vf, batch, objective_rewards, gamma, algo.gae_lambda, vf_rng));
    Vector adv_task, adv_cost;
    if (wiring.use_c0) {
      adv_task = estimate_advantages(*task_vf, batch, batch.rewards[kTaskStream], gamma, algo.gae_lambda, vf_rng);
    }
    if (wiring.use_c1) {
      adv_cost = estimate_advantages(*cost_vf, batch, batch.rewards[cost_stream(0)], gamma, algo.gae_lambda, vf_rng);
    }

    TrustRegionSubproblem sub;
    sub.g = policy_gradient(batch, policy, theta, adv_obj);
    sub.has_c0 = wiring.use_c0;
    sub.has_c1 = wiring.use_c1;
    if (wiring.use_c0) {
      sub.b0 = constraint_scale * policy_gradient(batch, policy, theta, adv_task);
      sub.c0 = surplus[0];
    }
    if (wiring.use_c1) {
      sub.b1 = constraint_scale * policy_gradient(batch, policy, theta, adv_cost);
      sub.c1 = surplus[1];
    }
    sub.delta = algo.delta;
    sub.hvp = make_kl_hvp(policy, theta, strided_columns(batch.states, algo.hvp_stride), algo.damping);
    const CanonicalSubproblem canon = canonicalize(sub, algo.cg_iterations, algo.cg_tol);

    const bool violated0 = wiring.use_c0 && canon.c0 > 0.0;
    const bool violated1 = wiring.use_c1 && canon.c1 > 0.0;
    bool recover0 = violated0;
    bool recover1 = violated1;
    Vector step;
    if (!violated0 && !violated1) {
      rep.branch = Branch::feasible;
      const DualSolution sol = solve_feasible(canon);
      rep.dual_case = sol.case_id;
      rep.fallback = sol.degenerate;
      step = sol.degenerate ? fallback_step(canon) : sol.step;
    } else {
      rep.branch = Branch::recovery;
      rep.dual_case = DualCase::recovery;
      if (!algo.combine_violations && violated0 && violated1) {
        (canon.c0 >= canon.c1 ? recover1 : recover0) = false;
      }
      try {
        std::vector<DualSolution> sols;
        if (recover0) {
          sols.push_back(solve_recovery(canon.bhat0, canon.c0, canon.hinv_b0, canon.delta));
          rep.reachable = rep.reachable && recovery_reachable(canon.c0, canon.s0, canon.delta);
        }
        if (recover1) {
          sols.push_back(solve_recovery(canon.bhat1, canon.c1, canon.hinv_b1, canon.delta));
          rep.reachable = rep.reachable && recovery_reachable(canon.c1, canon.s1, canon.delta);
        }
        step = combine_recovery(sols, canon.hvp, canon.delta);
      } catch (const IrrecoverableConstraint& e) {
        result.halted = true;
        result.diagnostic = "epoch " + std::to_string(epoch) + ": " + e.what();
        result.reports.push_back(rep);
        if (on_epoch) on_epoch(rep, theta);
        return result;
      }
    }

    // Backtracking line search on importance-weighted surrogates of the batch.
    const double surrogate_now = adv_obj.mean();
    Vector accepted_theta;
    for (int k = 0; k <= algo.backtracks && step.size() > 0 && step.squaredNorm() > 0.0; ++k) {
      const Vector x = std::pow(algo.backtrack_ratio, k) * step;
      const Vector candidate = theta + x;
      const Vector ratio = (policy.log_probs(candidate, batch.states, batch.actions) - batch.log_probs).array().exp();
      const double kl = mean_kl(policy, candidate, theta, batch.states);
      rep.kl = kl;
      rep.step_norm = x.norm();
      rep.backtracks = k;
      bool ok = std::isfinite(kl) && kl <= algo.kl_slack * algo.delta && ratio.allFinite();
      const Vector excess = ratio.array() - 1.0;
      const double c0_new =
          wiring.use_c0 ? canon.c0 - constraint_scale * excess.dot(adv_task) / double(batch.size()) : 0.0;
      const double c1_new =
          wiring.use_c1 ? canon.c1 + constraint_scale * excess.dot(adv_cost) / double(batch.size()) : 0.0;
      if (ok && rep.branch == Branch::feasible) {
        const double surrogate = ratio.dot(adv_obj) / double(batch.size());
        ok = surrogate > surrogate_now;
        if (wiring.use_c0) ok = ok && c0_new <= std::max(0.0, canon.c0) + tol0;
        if (wiring.use_c1) ok = ok && c1_new <= std::max(0.0, canon.c1) + tol1;
      } else if (ok) {
        if (recover0) ok = c0_new < canon.c0;
        if (recover1) ok = ok && c1_new < canon.c1;
      }
      if (ok) {
        accepted_theta = candidate;
        break;
      }
    }
    if (accepted_theta.size() > 0) {
      rep.accepted = true;
      theta = std::move(accepted_theta);
    } else if (step.size() == 0 || step.squaredNorm() == 0.0) {
      rep.kl = 0.0;
      rep.step_norm = 0.0;
    }
    result.reports.push_back(rep);
    if (on_epoch) on_epoch(rep, theta);
  }
  return result;
}

}  // namespace seps
