#include <benchmark/benchmark.h>

#include "seps/dual_solver.hpp"
#include "seps/env.hpp"
#include "seps/estimation.hpp"
#include "seps/harness/verify.hpp"
#include "seps/policy.hpp"
#include "seps/trust_region.hpp"

using namespace seps;

namespace {

void BM_SolveFeasible(benchmark::State& state) {
  Rng rng = make_rng(7, 0);
  std::vector<CanonicalSubproblem> problems;
  const int dim = static_cast<int>(state.range(0));
  for (int i = 0; i < 64; ++i) problems.push_back(harness::dense_canonical(harness::random_feasible_instance(rng, dim, dim)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_feasible(problems[i++ % problems.size()]));
  }
}
BENCHMARK(BM_SolveFeasible)->Arg(10)->Arg(50);

struct NavFixture {
  HazardNav env;
  GaussianMlpPolicy policy{env.spec().state_dim, env.spec().action_dim};
  Vector theta;
  TrajectoryBatch batch;

  explicit NavFixture(Eigen::Index steps) {
    Rng rng = make_rng(3, 0);
    theta = policy.initial_params(rng);
    batch = collect(env, policy, theta, {steps, 1}, rng);
  }
};

void BM_KlHvp(benchmark::State& state) {
  const NavFixture f(state.range(0));
  const Vector v = Vector::Ones(f.theta.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(kl_hessian_vector_product(f.policy, f.theta, f.batch.states, v, 0.1));
  }
}
BENCHMARK(BM_KlHvp)->Arg(1000)->Arg(4000)->Unit(benchmark::kMicrosecond);

void BM_ConjugateGradient(benchmark::State& state) {
  const NavFixture f(1000);
  const LinearOperator op = make_kl_hvp(f.policy, f.theta, f.batch.states, 0.1);
  const Vector rhs = Vector::Ones(f.theta.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(cg_solve(op, rhs, 10, 1e-10));
  }
}
BENCHMARK(BM_ConjugateGradient)->Unit(benchmark::kMillisecond);

void BM_CollectHazard(benchmark::State& state) {
  const HazardNav env;
  const GaussianMlpPolicy policy(env.spec().state_dim, env.spec().action_dim);
  Rng rng = make_rng(5, 0);
  const Vector theta = policy.initial_params(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(collect(env, policy, theta, {state.range(0), 1}, rng));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CollectHazard)->Arg(4000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
