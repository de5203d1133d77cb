#include <cmath>

#include <gtest/gtest.h>

#include <Eigen/Cholesky>

#include "seps/env.hpp"
#include "seps/estimation.hpp"
#include "seps/policy.hpp"
#include "seps/trust_region.hpp"

using namespace seps;

namespace {

Vector randn(Rng& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

struct Fixture {
  HazardNav env;
  GaussianMlpPolicy policy{2, 2, {16, 16}};
  Vector theta;
  TrajectoryBatch batch;

  explicit Fixture(std::uint64_t seed) {
    Rng rng = make_rng(seed);
    theta = policy.initial_params(rng) + randn(rng, policy.param_count(), 0.1);
    batch = collect(env, policy, theta, {300, 1}, rng);
  }
};

}  // namespace

TEST(TrustRegion, PolicyGradientOfZeroAdvantagesIsZero) {
  Fixture f(1);
  const Vector g = policy_gradient(f.batch, f.policy, f.theta, Vector::Zero(f.batch.size()));
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(TrustRegion, PolicyGradientSingleTransition) {
  Fixture f(2);
  Vector adv = Vector::Zero(f.batch.size());
  adv(7) = 1.0;
  const Vector g = policy_gradient(f.batch, f.policy, f.theta, adv);
  const Vector want = grad_log_prob(f.policy, f.theta, f.batch.states.col(7), f.batch.actions.col(7)) /
                      double(f.batch.size());
  EXPECT_LE((g - want).norm(), 1e-14 * (1.0 + want.norm()));
}

TEST(TrustRegion, PolicyGradientMatchesSurrogateFiniteDifference) {
  Fixture f(3);
  Rng rng = make_rng(30);
  const Vector adv = normalize(randn(rng, f.batch.size()));
  const Vector g = policy_gradient(f.batch, f.policy, f.theta, adv);
  auto surrogate = [&](const Vector& th) {
    const Vector lp = f.policy.log_probs(th, f.batch.states, f.batch.actions);
    return ((lp - f.batch.log_probs).array().exp() * adv.array()).mean();
  };
  constexpr double h = 1e-5;
  Vector fd(f.theta.size());
  for (Eigen::Index i = 0; i < f.theta.size(); ++i) {
    Vector p = f.theta, m = f.theta;
    p(i) += h;
    m(i) -= h;
    fd(i) = (surrogate(p) - surrogate(m)) / (2.0 * h);
  }
  EXPECT_LE((g - fd).norm() / fd.norm(), 1e-3);
}

TEST(TrustRegion, HvpOfZeroIsZero) {
  Fixture f(4);
  const Vector z = kl_hessian_vector_product(f.policy, f.theta, f.batch.states, Vector::Zero(f.theta.size()), 0.1);
  EXPECT_EQ(z.norm(), 0.0);
}

TEST(TrustRegion, HvpMatchesKlGradientFiniteDifference) {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    Fixture f(seed);
    Rng rng = make_rng(seed, 1);
    const Vector v = randn(rng, f.theta.size());
    const Vector hv = kl_hessian_vector_product(f.policy, f.theta, f.batch.states, v, 0.0);
    constexpr double h = 1e-4;
    const Vector fd = (f.policy.grad_mean_kl(f.theta + h * v, f.theta, f.batch.states) -
                       f.policy.grad_mean_kl(f.theta - h * v, f.theta, f.batch.states)) /
                      (2.0 * h);
    EXPECT_LE((hv - fd).norm() / fd.norm(), 1e-3);
  }
}

TEST(TrustRegion, SoftmaxHvpMatchesKlGradientFiniteDifference) {
  const TabularCmdp env = make_chain_fixture();
  const SoftmaxTabularPolicy p(5, 2);
  Rng rng = make_rng(8);
  const Vector theta = randn(rng, 10);
  const TrajectoryBatch b = collect(env, p, theta, {200, 1}, rng);
  const Vector v = randn(rng, 10);
  const Vector hv = kl_hessian_vector_product(p, theta, b.states, v, 0.0);
  constexpr double h = 1e-4;
  const Vector fd =
      (p.grad_mean_kl(theta + h * v, theta, b.states) - p.grad_mean_kl(theta - h * v, theta, b.states)) / (2.0 * h);
  EXPECT_LE((hv - fd).norm() / fd.norm(), 1e-3);
}

TEST(TrustRegion, DampingIsAdditive) {
  Fixture f(9);
  Rng rng = make_rng(90);
  const Vector v = randn(rng, f.theta.size());
  const Vector a = kl_hessian_vector_product(f.policy, f.theta, f.batch.states, v, 0.0);
  const Vector b = kl_hessian_vector_product(f.policy, f.theta, f.batch.states, v, 0.25);
  EXPECT_LE((b - a - 0.25 * v).cwiseAbs().maxCoeff(), 1e-15 * (1.0 + a.cwiseAbs().maxCoeff()));
}

TEST(TrustRegion, OperatorIsSymmetricPositiveDefinite) {
  Fixture f(10);
  const LinearOperator op = make_kl_hvp(f.policy, f.theta, f.batch.states, 0.1);
  Rng rng = make_rng(100);
  for (int k = 0; k < 5; ++k) {
    const Vector u = randn(rng, f.theta.size()), v = randn(rng, f.theta.size());
    const double uv = u.dot(op(v)), vu = v.dot(op(u));
    EXPECT_NEAR(uv, vu, 1e-10 * (std::abs(uv) + 1.0));
    EXPECT_GE(v.dot(op(v)), 0.1 * v.squaredNorm() * (1.0 - 1e-12));
  }
  const Vector v = randn(rng, f.theta.size());
  EXPECT_LE((op(v) - kl_hessian_vector_product(f.policy, f.theta, f.batch.states, v, 0.1)).norm(),
            1e-12 * op(v).norm());
}

TEST(TrustRegion, CgIdentityConvergesInOneIteration) {
  Rng rng = make_rng(11);
  const Vector rhs = randn(rng, 20);
  const CgResult r = cg_solve([](const Vector& v) { return v; }, rhs, 100, 1e-10);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LE((r.x - rhs).norm(), 1e-15 * rhs.norm());
  EXPECT_TRUE(r.converged);
}

TEST(TrustRegion, CgMatchesDenseSolve) {
  Rng rng = make_rng(12);
  Matrix m(50, 50);
  for (int j = 0; j < 50; ++j) m.col(j) = randn(rng, 50);
  const Matrix a = m.transpose() * m / 50.0 + 0.1 * Matrix::Identity(50, 50);
  const Vector rhs = randn(rng, 50);
  const CgResult r = cg_solve([&a](const Vector& v) { return Vector(a * v); }, rhs, 200, 1e-12);
  const Vector want = a.llt().solve(rhs);
  EXPECT_LE((r.x - want).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(r.relative_residual, 1e-12);
}

TEST(TrustRegion, CgZeroRhs) {
  const CgResult r = cg_solve([](const Vector& v) { return Vector(2.0 * v); }, Vector::Zero(6));
  EXPECT_EQ(r.x, Vector::Zero(6));
  EXPECT_EQ(r.relative_residual, 0.0);
}

TEST(TrustRegion, CgRejectsIndefiniteOperator) {
  Vector d(3);
  d << 1.0, -1.0, 1.0;
  Vector rhs(3);
  rhs << 0.0, 1.0, 0.0;
  EXPECT_THROW(cg_solve([&d](const Vector& v) { return Vector(d.cwiseProduct(v)); }, rhs), NumericalFailure);
}

TEST(TrustRegion, CgOnPolicyFixtures) {
  Fixture f(13);
  const LinearOperator op = make_kl_hvp(f.policy, f.theta, f.batch.states, 0.1);
  Rng rng = make_rng(130);
  const Vector rhs = randn(rng, f.theta.size());
  const CgResult r = cg_solve(op, rhs, 200, 1e-8);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.relative_residual, 1e-8);
  EXPECT_LE((op(r.x) - rhs).norm() / rhs.norm(), 1e-8);
}
