#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "seps/env.hpp"
#include "seps/estimation.hpp"
#include "seps/policy.hpp"

using namespace seps;

namespace {

Vector randn(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

// Hand-built batch of n steps cut into segments; every `term_every`-th segment
// end is a termination, the others are horizon cuts.
TrajectoryBatch synthetic_batch(Rng& rng, Eigen::Index n) {
  TrajectoryBatch b;
  b.log_probs = Vector::Zero(n);
  b.terminals.assign(static_cast<std::size_t>(n), false);
  b.episode_ends.assign(static_cast<std::size_t>(n), false);
  std::uniform_int_distribution<int> len(3, 12);
  Eigen::Index t = 0;
  int seg = 0;
  while (t < n) {
    t = std::min<Eigen::Index>(n, t + len(rng));
    b.episode_ends[static_cast<std::size_t>(t - 1)] = true;
    b.terminals[static_cast<std::size_t>(t - 1)] = (seg++ % 2 == 0) && t < n;
  }
  return b;
}

// Direct double loop: A_t = sum_l (gamma lam)^l delta_{t+l} inside the segment.
Vector naive_gae(const TrajectoryBatch& b, const Vector& r, const Vector& v, const Vector& vn, double gamma,
                 double lam) {
  const Eigen::Index n = b.size();
  Vector delta(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double boot = b.terminals[static_cast<std::size_t>(t)] ? 0.0 : vn(t);
    delta(t) = r(t) + gamma * boot - v(t);
  }
  Vector adv(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double sum = 0.0, w = 1.0;
    for (Eigen::Index k = t; k < n; ++k) {
      sum += w * delta(k);
      w *= gamma * lam;
      if (b.episode_ends[static_cast<std::size_t>(k)]) break;
    }
    adv(t) = sum;
  }
  return adv;
}

Vector naive_reward_to_go(const TrajectoryBatch& b, const Vector& r, double gamma) {
  const Eigen::Index n = b.size();
  Vector out(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double sum = 0.0, w = 1.0;
    for (Eigen::Index k = t; k < n; ++k) {
      sum += w * r(k);
      w *= gamma;
      if (b.episode_ends[static_cast<std::size_t>(k)]) break;
    }
    out(t) = sum;
  }
  return out;
}

}  // namespace

TEST(Estimation, DiscountedReturn) {
  const std::vector<double> three{1.0, 1.0, 1.0};
  EXPECT_NEAR(discounted_return(three, 0.9), 2.71, 1e-14);
  EXPECT_EQ(discounted_return(std::vector<double>{}, 0.5), 0.0);
  const std::vector<double> one{5.0};
  EXPECT_EQ(discounted_return(one, 0.99), 5.0);
}

TEST(Estimation, GaeWithZeroValuesAndUnitLambdaIsRewardToGo) {
  Rng rng = make_rng(1);
  const TrajectoryBatch b = synthetic_batch(rng, 200);
  const Vector r = randn(rng, 200);
  const Vector zero = Vector::Zero(200);
  const Vector adv = gae_advantages(b, r, zero, zero, 0.97, 1.0);
  EXPECT_LE((adv - naive_reward_to_go(b, r, 0.97)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((adv - rewards_to_go(b, r, zero, 0.97)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Estimation, GaeWithZeroLambdaIsTdError) {
  Rng rng = make_rng(2);
  const TrajectoryBatch b = synthetic_batch(rng, 150);
  const Vector r = randn(rng, 150), v = randn(rng, 150), vn = randn(rng, 150);
  const Vector adv = gae_advantages(b, r, v, vn, 0.9, 0.0);
  for (Eigen::Index t = 0; t < 150; ++t) {
    const double boot = b.terminals[static_cast<std::size_t>(t)] ? 0.0 : vn(t);
    EXPECT_NEAR(adv(t), r(t) + 0.9 * boot - v(t), 1e-14);
  }
}

TEST(Estimation, GaeMatchesDoubleLoop) {
  Rng rng = make_rng(3);
  const TrajectoryBatch b = synthetic_batch(rng, 500);
  const Vector r = randn(rng, 500), v = randn(rng, 500), vn = randn(rng, 500);
  const Vector adv = gae_advantages(b, r, v, vn, 0.99, 0.95);
  EXPECT_LE((adv - naive_gae(b, r, v, vn, 0.99, 0.95)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Estimation, RewardsToGoBootstrapsOnlyOnCuts) {
  TrajectoryBatch b;
  b.log_probs = Vector::Zero(4);
  b.terminals = {false, true, false, false};
  b.episode_ends = {false, true, false, true};
  Vector r(4), vn(4);
  r << 1, 2, 3, 4;
  vn << 10, 10, 10, 10;
  const Vector g = rewards_to_go(b, r, vn, 0.5);
  EXPECT_DOUBLE_EQ(g(1), 2.0);
  EXPECT_DOUBLE_EQ(g(0), 2.0);
  EXPECT_DOUBLE_EQ(g(3), 4.0 + 0.5 * 10.0);
  EXPECT_DOUBLE_EQ(g(2), 3.0 + 0.5 * 9.0);
}

TEST(Estimation, ConstraintSurpluses) {
  TrajectoryBatch b;
  b.episode_returns = {{1.0}, {0.4}, {2.5}};
  b.episode_undiscounted = b.episode_returns;
  CmdpSpec spec;
  spec.limits = {0.0, 2.5};
  auto c = constraint_surpluses(b, spec);
  EXPECT_NEAR(c[0], -0.4, 1e-15);
  EXPECT_EQ(c[1], 0.0);
  b.episode_returns[2] = {3.0, 3.2};
  c = constraint_surpluses(b, spec);
  EXPECT_NEAR(c[1], 0.6, 1e-14);
}

TEST(Estimation, SurplusesNeedACompletedEpisode) {
  TrajectoryBatch b;
  b.episode_returns = {{}, {}, {}};
  CmdpSpec spec;
  EXPECT_THROW(constraint_surpluses(b, spec), EstimationError);
}

TEST(Estimation, Normalize) {
  Vector x(5);
  x << 1, 2, 3, 4, 10;
  const Vector z = normalize(x);
  EXPECT_NEAR(z.mean(), 0.0, 1e-15);
  EXPECT_NEAR(z.squaredNorm() / 5.0, 1.0, 1e-14);
  EXPECT_EQ(normalize(Vector::Constant(4, 3.0)), Vector::Zero(4));
}

TEST(Estimation, BatchLengthIsExact) {
  const HazardNav env;
  const GaussianMlpPolicy p(2, 2);
  Rng init = make_rng(0);
  const Vector theta = p.initial_params(init);
  for (Eigen::Index steps : {200, 333, 1000}) {
    Rng rng = make_rng(1);
    const TrajectoryBatch b = collect(env, p, theta, {steps, 1}, rng);
    EXPECT_EQ(b.size(), steps);
    EXPECT_EQ(b.states.cols(), steps);
    EXPECT_TRUE(b.episode_ends.back());
  }
}

TEST(Estimation, CollectIsDeterministic) {
  const HazardNav env;
  const GaussianMlpPolicy p(2, 2, {32, 32}, kMinLogStd);
  Rng init = make_rng(0);
  const Vector theta = p.initial_params(init);
  for (int workers : {1, 3}) {
    Rng a = make_rng(9), b = make_rng(9);
    const TrajectoryBatch x = collect(env, p, theta, {900, workers}, a);
    const TrajectoryBatch y = collect(env, p, theta, {900, workers}, b);
    EXPECT_EQ(x.states, y.states);
    EXPECT_EQ(x.actions, y.actions);
    EXPECT_EQ(x.rewards[kTaskStream], y.rewards[kTaskStream]);
  }
}

TEST(Estimation, SampledTaskReturnMatchesExact) {
  const TabularCmdp env = make_chain_fixture();
  const SoftmaxTabularPolicy p(5, 2);
  Vector theta = Vector::Zero(p.param_count());
  theta(1) = 0.7;
  const ExactReturns exact = exact_policy_returns(env, p.table(theta));
  Rng rng = make_rng(5);
  const TrajectoryBatch b = collect(env, p, theta, {60000, 1}, rng);
  const double se_r = b.return_standard_error(kTaskStream);
  const double se_c = b.return_standard_error(cost_stream(0));
  const double se_u = b.return_standard_error(kUserStream);
  EXPECT_LE(std::abs(b.mean_return(kTaskStream) - exact.task), 3.0 * se_r);
  EXPECT_LE(std::abs(b.mean_return(cost_stream(0)) - exact.cost), 3.0 * se_c);
  EXPECT_LE(std::abs(b.mean_return(kUserStream) - exact.user), 3.0 * se_u);
}

TEST(Estimation, TerminalStepsEndEpisodes) {
  const TabularCmdp env = make_chain_fixture();
  const SoftmaxTabularPolicy p(5, 2);
  Rng rng = make_rng(5);
  const TrajectoryBatch b = collect(env, p, Vector::Zero(10), {100, 1}, rng);
  for (Eigen::Index t = 0; t < b.size(); ++t) {
    if (b.terminals[static_cast<std::size_t>(t)]) {
      EXPECT_TRUE(b.episode_ends[static_cast<std::size_t>(t)]);
      EXPECT_EQ(b.next_states(0, t), 4.0);
    }
  }
}

TEST(Estimation, ValueFitNeverIncreasesLoss) {
  Rng rng = make_rng(4);
  Matrix states = Matrix::Random(3, 400);
  Vector targets = (states.row(0).array() * 2.0 - states.row(2).array().square()).transpose().matrix();
  MlpValueFunction vf(3, {}, rng);
  double last = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto [before, after] = vf.fit(states, targets, rng);
    EXPECT_LE(after, before);
    last = after;
  }
  EXPECT_LT(last, 0.1 * targets.squaredNorm() / 400.0);
}

TEST(Estimation, TabularValueFitIsPerStateMean) {
  TabularValueFunction vf(3);
  Matrix states(1, 5);
  states << 0, 0, 1, 2, 2;
  Vector targets(5);
  targets << 1, 3, 5, -1, 1;
  Rng rng = make_rng(0);
  const auto [before, after] = vf.fit(states, targets, rng);
  EXPECT_LE(after, before);
  const Vector v = vf.predict(states);
  EXPECT_DOUBLE_EQ(v(0), 2.0);
  EXPECT_DOUBLE_EQ(v(2), 5.0);
  EXPECT_DOUBLE_EQ(v(3), 0.0);
}
