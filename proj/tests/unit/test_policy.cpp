#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "seps/policy.hpp"

using namespace seps;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

Vector randn(Rng& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

// Forward pass written from the documented layout: per layer [W col-major (out x in), b],
// tanh on hidden layers, linear output, then log_std.
Vector reference_mean(const std::vector<int>& sizes, const Vector& params, const Vector& state) {
  Vector h = state;
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    const Eigen::Map<const Matrix> w(params.data() + off, out, in);
    off += Eigen::Index(in) * out;
    const Vector b = params.segment(off, out);
    off += out;
    h = w * h + b;
    if (l + 2 < sizes.size()) h = h.array().tanh().matrix();
  }
  return h;
}

double reference_log_density(const Vector& mean, const Vector& log_std, const Vector& a) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double sd = std::exp(log_std(i));
    const double z = (a(i) - mean(i)) / sd;
    lp += -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

Vector perturbed(const GaussianMlpPolicy& p, Rng& rng) {
  Vector theta = p.initial_params(rng) + randn(rng, p.param_count(), 0.2);
  return theta;
}

}  // namespace

TEST(Policy, StandardNormalLogDensity) {
  const GaussianMlpPolicy p(1, 1, {}, 0.0);
  const Vector theta = Vector::Zero(p.param_count());
  EXPECT_NEAR(log_prob(p, theta, vec({0.7}), vec({0.0})), -0.5 * std::log(2.0 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(-0.5 * std::log(2.0 * std::numbers::pi), -0.9189, 1e-4);
}

TEST(Policy, UniformSoftmaxLogProb) {
  const SoftmaxTabularPolicy p(3, 4);
  const Vector theta = Vector::Zero(p.param_count());
  for (int a = 0; a < 4; ++a) EXPECT_NEAR(log_prob(p, theta, vec({1.0}), vec({double(a)})), std::log(0.25), 1e-14);
}

TEST(Policy, LogProbMatchesIndependentForwardPass) {
  const std::vector<int> hidden{8, 6};
  const GaussianMlpPolicy p(3, 2, hidden);
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng = make_rng(seed);
    const Vector theta = perturbed(p, rng);
    const Vector s = randn(rng, 3);
    const Vector a = randn(rng, 2);
    const Vector mean = reference_mean({3, 8, 6, 2}, theta, s);
    const Vector ls = theta.tail(2);
    EXPECT_NEAR(log_prob(p, theta, s, a), reference_log_density(mean, ls, a), 1e-10);
  }
}

TEST(Policy, SampledLogProbMatchesDensity) {
  const GaussianMlpPolicy p(2, 2, {5});
  Rng rng = make_rng(4);
  const Vector theta = perturbed(p, rng);
  const Vector s = randn(rng, 2);
  const GaussianAction g = p.act(theta, s, rng);
  EXPECT_NEAR(g.log_prob, reference_log_density(g.mean, g.log_std, g.action), 1e-10);
}

TEST(Policy, GradLogProbFiniteDifferences) {
  const GaussianMlpPolicy p(4, 2, {16, 16});
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(seed, 1);
    const Vector theta = perturbed(p, rng);
    const Vector s = randn(rng, 4);
    const Vector a = p.sample(theta, s, rng).action;
    const Vector g = grad_log_prob(p, theta, s, a);
    std::uniform_int_distribution<Eigen::Index> pick(0, p.param_count() - 1);
    Vector an(64), fd(64);
    constexpr double h = 1e-5;
    for (int k = 0; k < 64; ++k) {
      const Eigen::Index i = pick(rng);
      Vector tp = theta, tm = theta;
      tp(i) += h;
      tm(i) -= h;
      an(k) = g(i);
      fd(k) = (log_prob(p, tp, s, a) - log_prob(p, tm, s, a)) / (2.0 * h);
    }
    EXPECT_LE((an - fd).norm() / fd.norm(), 1e-4) << "seed " << seed;
  }
}

TEST(Policy, LinearMeanGradientClosedForm) {
  const GaussianMlpPolicy p(1, 1, {}, 0.0);
  // params: [w, b, log_std]
  const Vector theta = vec({0.8, -0.3, std::log(0.5)});
  const double s = 1.7, a = 0.4;
  const double mu = 0.8 * s - 0.3, var = 0.25;
  const Vector g = grad_log_prob(p, theta, vec({s}), vec({a}));
  EXPECT_NEAR(g(0), (a - mu) / var * s, 1e-12);
  EXPECT_NEAR(g(1), (a - mu) / var, 1e-12);
  EXPECT_NEAR(g(2), (a - mu) * (a - mu) / var - 1.0, 1e-12);
}

TEST(Policy, GradientAtMeanVanishesForMeanParameters) {
  const GaussianMlpPolicy p(3, 2, {8});
  Rng rng = make_rng(2);
  const Vector theta = perturbed(p, rng);
  const Vector s = randn(rng, 3);
  const Vector mean = p.means(theta, s);
  const Vector g = grad_log_prob(p, theta, s, mean);
  EXPECT_LE(g.head(p.mean_network().param_count()).norm(), 1e-14);
}

TEST(Policy, SoftmaxGradientClosedForm) {
  const SoftmaxTabularPolicy p(2, 3);
  const Vector theta = vec({0.1, 0.5, -0.2, 1.0, 0.0, 0.3});
  const Vector g = grad_log_prob(p, theta, vec({1.0}), vec({2.0}));
  const Matrix t = p.table(theta);
  EXPECT_EQ(g.head(3).norm(), 0.0);
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(g(3 + a), (a == 2 ? 1.0 : 0.0) - t(1, a), 1e-14);
}

TEST(Policy, KlIdentityAndClosedForm) {
  const GaussianMlpPolicy p(1, 1, {}, 0.0);
  const Vector old_theta = vec({0.0, 0.0, 0.0});
  const Vector new_theta = vec({0.0, 1.0, 0.0});
  const Matrix states = Matrix::Random(1, 7);
  EXPECT_EQ(mean_kl(p, old_theta, old_theta, states), 0.0);
  EXPECT_NEAR(mean_kl(p, new_theta, old_theta, states), 0.5, 1e-14);
}

TEST(Policy, KlMatchesMonteCarlo) {
  const GaussianMlpPolicy p(2, 2, {6});
  Rng rng = make_rng(8);
  const Vector old_theta = perturbed(p, rng);
  const Vector new_theta = old_theta + randn(rng, p.param_count(), 0.1);
  const Vector s = randn(rng, 2);
  const double exact = mean_kl(p, new_theta, old_theta, s);
  constexpr int kSamples = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < kSamples; ++i) {
    const Vector a = p.sample(new_theta, s, rng).action;
    const double d = log_prob(p, new_theta, s, a) - log_prob(p, old_theta, s, a);
    sum += d;
    sq += d * d;
  }
  const double mean = sum / kSamples;
  const double se = std::sqrt((sq / kSamples - mean * mean) / (kSamples - 1));
  EXPECT_LE(std::abs(mean - exact), 3.0 * se);
}

TEST(Policy, SoftmaxKlMatchesDirectSum) {
  const SoftmaxTabularPolicy p(2, 3);
  const Vector a = vec({0.1, 0.5, -0.2, 1.0, 0.0, 0.3});
  const Vector b = vec({0.0, 0.0, 0.0, -0.5, 0.2, 0.7});
  Matrix states(1, 2);
  states << 0.0, 1.0;
  const Matrix pa = p.table(a), pb = p.table(b);
  double want = 0.0;
  for (int s = 0; s < 2; ++s)
    for (int k = 0; k < 3; ++k) want += pa(s, k) * std::log(pa(s, k) / pb(s, k)) / 2.0;
  EXPECT_NEAR(mean_kl(p, a, b, states), want, 1e-14);
}

TEST(Policy, Entropies) {
  const GaussianMlpPolicy p(1, 1, {}, 0.0);
  Vector theta = Vector::Zero(p.param_count());
  const double h = entropy(p, theta, vec({0.0}));
  EXPECT_NEAR(h, 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e), 1e-14);
  EXPECT_NEAR(h, 1.4189, 1e-4);
  theta(2) -= 0.1;
  EXPECT_LT(entropy(p, theta, vec({0.0})), h);

  const SoftmaxTabularPolicy sp(1, 4);
  EXPECT_NEAR(entropy(sp, Vector::Zero(4), vec({0.0})), std::log(4.0), 1e-14);
}

TEST(Policy, EntropyMonotoneInEachLogStd) {
  const GaussianMlpPolicy p(2, 3, {4});
  Rng rng = make_rng(1);
  const Vector theta = perturbed(p, rng);
  const double h = entropy(p, theta, vec({0.1, 0.2}));
  for (int i = 0; i < 3; ++i) {
    Vector t = theta;
    t(t.size() - 3 + i) -= 0.05;
    EXPECT_LT(entropy(p, t, vec({0.1, 0.2})), h);
  }
}

TEST(Policy, LogStdClamped) {
  const GaussianMlpPolicy p(1, 1, {}, 0.0);
  const Vector theta = vec({0.0, 0.0, 9.0});
  EXPECT_EQ(p.log_std(theta)(0), kMaxLogStd);
  const Vector low = vec({0.0, 0.0, -9.0});
  EXPECT_EQ(p.log_std(low)(0), kMinLogStd);
}

TEST(Policy, SamplingStatistics) {
  const GaussianMlpPolicy p(1, 1, {}, 0.0);
  const Vector theta = vec({0.0, 1.5, std::log(0.3)});
  Rng rng = make_rng(12);
  constexpr int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = p.sample(theta, vec({0.0}), rng).action(0);
    sum += a;
    sq += a * a;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 1.5, 4.0 * 0.3 / std::sqrt(double(n)));
  EXPECT_NEAR(sd, 0.3, 0.003);

  const SoftmaxTabularPolicy sp(1, 3);
  const Vector logits = vec({0.0, std::log(2.0), std::log(3.0)});
  std::array<int, 3> counts{};
  for (int i = 0; i < 60000; ++i) ++counts[static_cast<std::size_t>(sp.sample(logits, vec({0.0}), rng).action(0))];
  EXPECT_NEAR(counts[0] / 60000.0, 1.0 / 6.0, 0.01);
  EXPECT_NEAR(counts[2] / 60000.0, 0.5, 0.01);
}

TEST(Policy, FlattenRoundTrip) {
  const GaussianMlpPolicy p(3, 2, {5, 4});
  Rng rng = make_rng(3);
  const Vector theta = perturbed(p, rng);
  const auto u = p.unflatten(theta);
  ASSERT_EQ(u.weights.size(), 3u);
  EXPECT_EQ(u.weights[0].rows(), 5);
  EXPECT_EQ(u.weights[0].cols(), 3);
  EXPECT_EQ(p.flatten(u), theta);
}

TEST(Policy, DimensionMismatchThrows) {
  const GaussianMlpPolicy p(3, 2, {4});
  const Vector theta = Vector::Zero(p.param_count());
  EXPECT_THROW(log_prob(p, theta, Vector::Zero(2), Vector::Zero(2)), ContractViolation);
  EXPECT_THROW(log_prob(p, theta, Vector::Zero(3), Vector::Zero(3)), ContractViolation);
  EXPECT_THROW(log_prob(p, Vector::Zero(3), Vector::Zero(3), Vector::Zero(2)), ContractViolation);
  EXPECT_THROW(mean_kl(p, theta, theta, Matrix(3, 0)), ContractViolation);
}

TEST(Policy, CheckpointRoundTrip) {
  const GaussianMlpPolicy p(3, 2, {5});
  Rng rng = make_rng(6);
  const Vector theta = perturbed(p, rng);
  const std::string stem = ::testing::TempDir() + "ckpt_roundtrip";
  save_checkpoint(stem, p, theta);
  const Checkpoint c = load_checkpoint(stem);
  EXPECT_EQ(c.policy->descriptor(), p.descriptor());
  EXPECT_EQ(c.params, theta);
}
