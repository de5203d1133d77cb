#include <cmath>

#include <gtest/gtest.h>

#include "seps/engine.hpp"

using namespace seps;

namespace {

AlgoConfig quick(Algorithm a, int epochs = 3, Eigen::Index steps = 400) {
  AlgoConfig c;
  c.algorithm = a;
  c.d0 = 0.0;
  c.d1 = 2.5;
  c.epochs = epochs;
  c.steps_per_epoch = steps;
  return c;
}

TabularCmdp zero_reward_chain() {
  std::vector<Matrix> t(2, Matrix::Zero(3, 3));
  t[0] << 0, 1, 0, 0, 0, 1, 0, 0, 1;
  t[1] << 0, 0, 1, 0, 0, 1, 0, 0, 1;
  const std::vector<Matrix> z(2, Matrix::Zero(3, 3));
  Vector rho = Vector::Zero(3);
  rho(0) = 1.0;
  return TabularCmdp("flat", t, z, z, z, rho, 0.9, 10, {0.0, 1.0}, {false, false, true});
}

}  // namespace

TEST(Engine, WiringConstraintCounts) {
  AlgoConfig a;
  a.algorithm = Algorithm::seps;
  EXPECT_EQ(variant_wiring(a).constraint_count(), 2);
  a.algorithm = Algorithm::hum;
  EXPECT_EQ(variant_wiring(a).constraint_count(), 0);
  EXPECT_EQ(variant_wiring(a).objective, Objective::user);
  a.algorithm = Algorithm::agt;
  EXPECT_EQ(variant_wiring(a).constraint_count(), 0);
  EXPECT_EQ(variant_wiring(a).objective, Objective::task);
  a.algorithm = Algorithm::seps_no_c0;
  EXPECT_EQ(variant_wiring(a).constraint_count(), 1);
  EXPECT_TRUE(variant_wiring(a).use_c1);
  a.algorithm = Algorithm::seps_lin_no_c0;
  EXPECT_EQ(variant_wiring(a).constraint_count(), 1);
  EXPECT_EQ(variant_wiring(a).objective, Objective::user_plus_task);
}

TEST(Engine, ReconciliationDefaults) {
  AlgoConfig a;
  a.algorithm = Algorithm::eps;
  EXPECT_EQ(variant_wiring(a).lambda, 2.0);
  a.algorithm = Algorithm::seps_lin_no_c0;
  EXPECT_EQ(variant_wiring(a).lambda, 3.0);
  a.reconciliation_lambda = 0.5;
  EXPECT_EQ(variant_wiring(a).lambda, 0.5);
}

TEST(Engine, AlgorithmTags) {
  for (Algorithm a : {Algorithm::seps, Algorithm::agt, Algorithm::hum, Algorithm::eps, Algorithm::seps_no_c0,
                      Algorithm::seps_lin_no_c0}) {
    EXPECT_EQ(parse_algorithm(to_string(a)), a);
  }
  EXPECT_THROW(parse_algorithm("trpo"), ConfigError);
}

TEST(Engine, ValidationNamesMissingKey) {
  AlgoConfig a;
  a.algorithm = Algorithm::seps;
  a.d0 = 0.0;
  try {
    a.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("d1"), std::string::npos);
  }
  a.d1 = 2.5;
  EXPECT_NO_THROW(a.validate());
  a.delta = 0.0;
  EXPECT_THROW(a.validate(), ConfigError);
  AlgoConfig hum;
  hum.algorithm = Algorithm::hum;
  EXPECT_NO_THROW(hum.validate());
}

TEST(Engine, EpsWithZeroLambdaIsTaskReward) {
  const HazardNav env;
  const GaussianMlpPolicy p(2, 2);
  Rng rng = make_rng(1);
  const Vector theta = p.initial_params(rng);
  const TrajectoryBatch b = collect(env, p, theta, {300, 1}, rng);
  EXPECT_EQ(eps_objective_rewards(b, p, theta, 0.0, 0.01), b.rewards[kTaskStream]);
  const Vector two = eps_objective_rewards(b, p, theta, 2.0, 0.0);
  EXPECT_LE((two - b.rewards[kTaskStream] - 2.0 * b.rewards[kUserStream]).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Engine, EpsWithZeroLambdaTrainsLikeAgt) {
  const HazardNav env;
  const GaussianMlpPolicy p(2, 2);
  AlgoConfig eps = quick(Algorithm::eps);
  eps.reconciliation_lambda = 0.0;
  const TrainResult a = train(env, p, quick(Algorithm::agt), 4);
  const TrainResult b = train(env, p, eps, 4);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.reports.size(), b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) EXPECT_EQ(a.reports[i].j_r, b.reports[i].j_r);
}

TEST(Engine, AgtNeverActivatesConstraints) {
  const HazardNav env;
  const GaussianMlpPolicy p(2, 2);
  const TrainResult r = train(env, p, quick(Algorithm::agt, 5), 2);
  ASSERT_FALSE(r.halted) << r.diagnostic;
  for (const auto& e : r.reports) {
    EXPECT_EQ(e.branch, Branch::feasible);
    EXPECT_EQ(e.dual_case, DualCase::none_active);
    EXPECT_TRUE(std::isnan(e.c0));
    EXPECT_TRUE(std::isnan(e.c1));
  }
}

TEST(Engine, SepsWiresBothConstraintsOnButtonNav) {
  const ButtonNav env;
  const GaussianMlpPolicy p(5, 2);
  const TrainResult r = train(env, p, quick(Algorithm::seps, 2, 800), 3);
  ASSERT_FALSE(r.halted) << r.diagnostic;
  for (const auto& e : r.reports) {
    EXPECT_NEAR(e.c0, 0.0 - e.j_r, 1e-12);
    EXPECT_NEAR(e.c1, e.j_c1 - 2.5, 1e-12);
  }
}

TEST(Engine, ZeroAdvantagesGiveZeroStep) {
  const TabularCmdp env = zero_reward_chain();
  const SoftmaxTabularPolicy p(3, 2);
  const TrainResult r = train(env, p, quick(Algorithm::hum, 3, 50), 1);
  EXPECT_EQ(r.params, Vector::Zero(6));
  for (const auto& e : r.reports) EXPECT_EQ(e.step_norm, 0.0);
}

TEST(Engine, TrainingIsDeterministic) {
  const TabularCmdp env = make_chain_fixture();
  const SoftmaxTabularPolicy p(5, 2);
  AlgoConfig a = quick(Algorithm::seps, 20, 500);
  a.d0 = 0.6;
  a.d1 = 0.05;
  const TrainResult x = train(env, p, a, 9);
  const TrainResult y = train(env, p, a, 9);
  EXPECT_EQ(x.params, y.params);
  const TrainResult z = train(env, p, a, 10);
  EXPECT_NE(x.params, z.params);
}

TEST(Engine, AcceptedStepsRespectKlBound) {
  const HazardNav env;
  const GaussianMlpPolicy p(2, 2);
  AlgoConfig a = quick(Algorithm::seps, 6, 1000);
  const TrainResult r = train(env, p, a, 5);
  for (const auto& e : r.reports) {
    if (e.accepted) EXPECT_LE(e.kl, a.kl_slack * a.delta);
  }
}

TEST(Engine, RecoveryReducesViolatedCost) {
  // Start with a strong preference for the cost-incurring shortcut on the chain.
  const TabularCmdp env = make_chain_fixture();
  const SoftmaxTabularPolicy p(5, 2);
  Vector theta = Vector::Zero(10);
  theta(1) = 3.0;
  AlgoConfig a = quick(Algorithm::seps, 15, 1000);
  a.d0 = 0.6;
  a.d1 = 0.05;
  const double before = exact_policy_returns(env, p.table(theta)).cost;
  const TrainResult r = train(env, p, theta, a, 2);
  ASSERT_FALSE(r.reports.empty());
  EXPECT_EQ(r.reports.front().branch, Branch::recovery);
  EXPECT_LT(exact_policy_returns(env, p.table(r.params)).cost, before);
}
