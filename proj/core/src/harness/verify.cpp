#include "seps/harness/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "seps/env.hpp"
#include "seps/estimation.hpp"
#include "seps/policy.hpp"
#include "seps/trust_region.hpp"

namespace seps::harness {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Vector randn(Rng& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

struct Whitened {
  Eigen::LLT<Matrix> llt;
  Vector g;
  Vector a0;
  Vector a1;
  double radius = 0.0;
};

Whitened whiten(const DenseSubproblem& p) {
  Whitened w;
  w.llt.compute(p.H);
  require(w.llt.info() == Eigen::Success, "qp oracle: H is not positive definite");
  const auto L = w.llt.matrixL();
  w.g = L.solve(p.ghat);
  w.a0 = L.solve(p.bhat0);
  w.a1 = L.solve(p.bhat1);
  w.radius = std::sqrt(2.0 * p.delta);
  return w;
}

bool whitened_feasible(const DenseSubproblem& p, const Whitened& w, const Vector& y) {
  const double r2 = w.radius * w.radius;
  if (y.squaredNorm() > r2 * (1.0 + 1e-9)) return false;
  if (p.has_c0 && w.a0.dot(y) + p.c0 > 1e-9 * (1.0 + std::abs(p.c0) + w.a0.norm() * w.radius)) return false;
  if (p.has_c1 && w.a1.dot(y) + p.c1 > 1e-9 * (1.0 + std::abs(p.c1) + w.a1.norm() * w.radius)) return false;
  return true;
}

QpSolution unwhiten(const DenseSubproblem& p, const Whitened& w, const Vector& y) {
  QpSolution s;
  s.feasible = true;
  s.x = w.llt.matrixU().solve(y);
  s.objective = p.ghat.dot(s.x);
  return s;
}

// Minimizer of g^T y over the circle centered at `center` with radius rho in
// the affine subspace whose directions are the complement of span(normals).
Vector circle_minimizer(const Vector& g_perp, const Vector& center, double rho, double g_norm) {
  const double n = g_perp.norm();
  if (n <= 1e-14 * std::max(1.0, g_norm)) return center;
  return center - (rho / n) * g_perp;
}

}  // namespace

QpSolution solve_qp_oracle(const DenseSubproblem& p) {
  const Whitened w = whiten(p);
  const double r2 = w.radius * w.radius;
  const double g_norm = w.g.norm();
  std::vector<Vector> candidates;
  candidates.push_back(Vector::Zero(w.g.size()));
  if (g_norm > 0.0) candidates.push_back(-(w.radius / g_norm) * w.g);

  auto plane_sphere = [&](const Vector& a, double c) {
    const double an = a.norm();
    if (an == 0.0) return;
    const Vector n = a / an;
    const double h = -c / an;
    if (h * h > r2) return;
    const double rho = std::sqrt(r2 - h * h);
    const Vector g_perp = w.g - w.g.dot(n) * n;
    candidates.push_back(circle_minimizer(g_perp, h * n, rho, g_norm));
  };
  if (p.has_c0) plane_sphere(w.a0, p.c0);
  if (p.has_c1) plane_sphere(w.a1, p.c1);

  if (p.has_c0 && p.has_c1) {
    Matrix A(w.g.size(), 2);
    A.col(0) = w.a0;
    A.col(1) = w.a1;
    const Eigen::Matrix2d G = A.transpose() * A;
    if (G.determinant() > 1e-12 * G(0, 0) * G(1, 1)) {
      const Eigen::Vector2d alpha = G.ldlt().solve(Eigen::Vector2d(-p.c0, -p.c1));
      const Vector point = A * alpha;
      if (point.squaredNorm() <= r2) {
        const double rho = std::sqrt(r2 - point.squaredNorm());
        const Vector g_perp = w.g - A * G.ldlt().solve(A.transpose() * w.g);
        candidates.push_back(circle_minimizer(g_perp, point, rho, g_norm));
      }
    }
  }

  QpSolution best;
  double best_value = std::numeric_limits<double>::infinity();
  for (const Vector& y : candidates) {
    if (!whitened_feasible(p, w, y)) continue;
    const double v = w.g.dot(y);
    if (v < best_value) {
      best_value = v;
      best = unwhiten(p, w, y);
    }
  }
  return best;
}

QpSolution solve_qp_projected_gradient(const DenseSubproblem& p, int iterations, double step) {
  const Whitened w = whiten(p);
  const Eigen::Index d = w.g.size();
  auto project = [&](const Vector& z) {
    // Dykstra's alternating projections onto ball, half-space 0, half-space 1.
    Vector y = z;
    std::vector<Vector> incr(3, Vector::Zero(d));
    for (int it = 0; it < 2000; ++it) {
      const Vector before = y;
      for (int k = 0; k < 3; ++k) {
        Vector u = y + incr[static_cast<std::size_t>(k)];
        Vector proj = u;
        if (k == 0) {
          const double n = u.norm();
          if (n > w.radius) proj = u * (w.radius / n);
        } else {
          const bool has = k == 1 ? p.has_c0 : p.has_c1;
          const Vector& a = k == 1 ? w.a0 : w.a1;
          const double c = k == 1 ? p.c0 : p.c1;
          const double viol = a.dot(u) + c;
          if (has && viol > 0.0 && a.squaredNorm() > 0.0) proj = u - (viol / a.squaredNorm()) * a;
        }
        incr[static_cast<std::size_t>(k)] = u - proj;
        y = proj;
      }
      if ((y - before).norm() <= 1e-15 * (1.0 + w.radius)) break;
    }
    return y;
  };
  Vector y = Vector::Zero(d);
  for (int k = 0; k < iterations; ++k) {
    const Vector next = project(y - step * w.g);
    const bool done = (next - y).norm() <= 1e-14 * (1.0 + w.radius);
    y = next;
    if (done) break;
  }
  return unwhiten(p, w, y);
}

CanonicalSubproblem dense_canonical(const DenseSubproblem& p) {
  TrustRegionSubproblem sub;
  sub.g = -p.ghat;
  sub.b0 = -p.bhat0;
  sub.b1 = p.bhat1;
  sub.c0 = p.c0;
  sub.c1 = p.c1;
  sub.has_c0 = p.has_c0;
  sub.has_c1 = p.has_c1;
  sub.delta = p.delta;
  const Matrix H = p.H;
  sub.hvp = [H](const Vector& v) { return Vector(H * v); };
  const Eigen::LLT<Matrix> llt(H);
  return canonicalize(sub, [&llt](const Vector& v) { return Vector(llt.solve(v)); });
}

DenseSubproblem random_feasible_instance(Rng& rng, int min_dim, int max_dim) {
  std::uniform_int_distribution<int> dim_dist(min_dim, max_dim);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int d = dim_dist(rng);
  DenseSubproblem p;
  Matrix M(d, d);
  for (int i = 0; i < d; ++i) M.col(i) = randn(rng, d);
  p.H = M.transpose() * M / double(d) + (0.05 + 0.95 * u01(rng)) * Matrix::Identity(d, d);
  p.delta = std::pow(10.0, -2.0 + 2.0 * u01(rng));
  p.ghat = randn(rng, d);
  p.bhat0 = randn(rng, d);
  p.bhat1 = randn(rng, d);
  // Normals leaning against the objective make constraints bind more often.
  if (u01(rng) < 0.4) p.bhat0 = -p.ghat + 0.7 * p.bhat0;
  if (u01(rng) < 0.4) p.bhat1 = -p.ghat + 0.7 * p.bhat1;
  // Some instances get nearly opposed or aligned constraint normals.
  const double mix = u01(rng);
  if (mix < 0.2) p.bhat1 = -p.bhat0 + 0.5 * p.bhat1;
  else if (mix < 0.3) p.bhat1 = p.bhat0 + 0.5 * p.bhat1;
  const Eigen::LLT<Matrix> llt(p.H);
  const double s0 = p.bhat0.dot(llt.solve(p.bhat0));
  const double s1 = p.bhat1.dot(llt.solve(p.bhat1));
  p.c0 = -(0.01 + 1.3 * u01(rng)) * std::sqrt(2.0 * p.delta * s0);
  p.c1 = -(0.01 + 1.3 * u01(rng)) * std::sqrt(2.0 * p.delta * s1);
  return p;
}

DualSweepStats run_dual_sweep(int instances, std::uint64_t seed, std::string* csv, double objective_tol,
                              double kkt_tol) {
  const auto t0 = Clock::now();
  DualSweepStats st;
  Rng rng = make_rng(seed, 0xd5a1);
  if (csv) *csv = "instance,dim,case,objective,oracle_objective,relative_error,stationarity,feasibility,slackness\n";
  for (int i = 0; i < instances; ++i) {
    const DenseSubproblem p = random_feasible_instance(rng, 5, 50);
    const CanonicalSubproblem canon = dense_canonical(p);
    const DualSolution sol = solve_feasible(canon);
    const QpSolution oracle = solve_qp_oracle(p);
    ++st.instances;
    bool ok = !sol.degenerate && oracle.feasible;
    double rel = std::numeric_limits<double>::infinity();
    KktResiduals k{std::numeric_limits<double>::infinity(), 0.0, 0.0};
    double objective = std::numeric_limits<double>::quiet_NaN();
    if (ok) {
      objective = p.ghat.dot(sol.step);
      rel = std::abs(objective - oracle.objective) / std::max(std::abs(oracle.objective), 1e-300);
      k = kkt_check(canon, sol);
      const double gap = std::abs(sol.dual_value - objective) / std::max(std::abs(objective), 1e-300);
      st.max_duality_gap = std::max(st.max_duality_gap, gap);
      const double quad = 0.5 * sol.step.dot(p.H * sol.step);
      st.max_trust_region_excess = std::max(st.max_trust_region_excess, quad / p.delta - 1.0);
      ++st.case_counts[static_cast<std::size_t>(sol.case_id)];
    }
    st.max_relative_objective_error = std::max(st.max_relative_objective_error, rel);
    st.max_kkt_residual = std::max(st.max_kkt_residual, k.max());
    if (!ok || rel > objective_tol || k.max() > kkt_tol) ++st.failures;
    if (csv) {
      char buf[512];
      std::snprintf(buf, sizeof buf, "%d,%d,%s,%.17g,%.17g,%.6e,%.6e,%.6e,%.6e\n", i, int(p.ghat.size()),
                    sol.degenerate ? "degenerate" : to_string(sol.case_id).c_str(), objective, oracle.objective, rel,
                    k.stationarity, k.primal_feasibility, k.complementary_slackness);
      *csv += buf;
    }
  }
  st.seconds = seconds_since(t0);
  return st;
}

namespace {

double relative_error(const Vector& a, const Vector& ref) {
  const double denom = ref.norm();
  return denom > 0.0 ? (a - ref).norm() / denom : a.norm();
}

std::vector<Eigen::Index> sample_coordinates(Rng& rng, Eigen::Index total, int count) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(count)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Max relative error of grad log pi on `coords` sampled coordinates at one (s, a).
double grad_log_prob_error(const Policy& policy, const Vector& params, const Vector& state, const Vector& action,
                           Rng& rng, int coords) {
  const Vector analytic = grad_log_prob(policy, params, state, action);
  const auto idx = sample_coordinates(rng, policy.param_count(), coords);
  Vector a(static_cast<Eigen::Index>(idx.size()));
  Vector fd(static_cast<Eigen::Index>(idx.size()));
  constexpr double h = 1e-5;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Vector plus = params, minus = params;
    plus(idx[k]) += h;
    minus(idx[k]) -= h;
    a(static_cast<Eigen::Index>(k)) = analytic(idx[k]);
    fd(static_cast<Eigen::Index>(k)) =
        (log_prob(policy, plus, state, action) - log_prob(policy, minus, state, action)) / (2.0 * h);
  }
  return relative_error(a, fd);
}

double hvp_error(const Policy& policy, const Vector& params, const Matrix& states, Rng& rng) {
  const Vector v = randn(rng, policy.param_count());
  const Vector hv = kl_hessian_vector_product(policy, params, states, v, 0.0);
  constexpr double h = 1e-4;
  const Vector fd = (policy.grad_mean_kl(params + h * v, params, states) -
                     policy.grad_mean_kl(params - h * v, params, states)) /
                    (2.0 * h);
  return relative_error(hv, fd);
}

}  // namespace

GradCheckStats run_grad_check(int seeds, int coordinates, std::string* csv) {
  const auto t0 = Clock::now();
  GradCheckStats st;
  st.seeds = seeds;
  st.coordinates = coordinates;
  if (csv) *csv = "seed,check,relative_error,iterations\n";
  auto row = [&](int seed, const char* check, double err, int iters) {
    if (!csv) return;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%s,%.6e,%d\n", seed, check, err, iters);
    *csv += buf;
  };
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng = make_rng(static_cast<std::uint64_t>(seed), 0x9c);
    // Gaussian MLP policy with perturbed weights so every layer carries signal.
    GaussianMlpPolicy gauss(5, 2);
    Vector theta = gauss.initial_params(rng) + randn(rng, gauss.param_count(), 0.1);
    std::uniform_real_distribution<double> ls(-1.0, 0.0);
    for (Eigen::Index i = 0; i < 2; ++i) theta(theta.size() - 2 + i) = ls(rng);
    Vector state(5);
    for (Eigen::Index i = 0; i < 5; ++i) state(i) = u(rng);
    const Vector action = gauss.sample(theta, state, rng).action;
    const double ge = grad_log_prob_error(gauss, theta, state, action, rng, coordinates);
    st.max_grad_log_prob_error = std::max(st.max_grad_log_prob_error, ge);
    row(seed, "grad_log_prob_gaussian", ge, 0);

    SoftmaxTabularPolicy soft(5, 3);
    const Vector logits = randn(rng, soft.param_count());
    const Vector s_state = Vector::Constant(1, double(seed % 5));
    const Vector s_action = soft.sample(logits, s_state, rng).action;
    const double se = grad_log_prob_error(soft, logits, s_state, s_action, rng, coordinates);
    st.max_softmax_grad_error = std::max(st.max_softmax_grad_error, se);
    row(seed, "grad_log_prob_softmax", se, 0);

    Matrix states(5, 64);
    for (Eigen::Index j = 0; j < states.size(); ++j) states(j) = u(rng);
    const double he = hvp_error(gauss, theta, states, rng);
    Matrix s_states(1, 40);
    for (Eigen::Index j = 0; j < 40; ++j) s_states(0, j) = double(j % 5);
    const double hs = hvp_error(soft, logits, s_states, rng);
    st.max_hvp_error = std::max({st.max_hvp_error, he, hs});
    row(seed, "hvp_gaussian", he, 0);
    row(seed, "hvp_softmax", hs, 0);
  }

  // CG on the KL operators of every shipped environment, damping 0.1.
  const HazardNav hazard;
  const ButtonNav button;
  const TabularCmdp chain = make_chain_fixture();
  const std::vector<const Environment*> envs{&hazard, &button, &chain};
  for (std::size_t e = 0; e < envs.size(); ++e) {
    const Environment& env = *envs[e];
    std::unique_ptr<Policy> policy;
    if (const auto* tab = dynamic_cast<const TabularCmdp*>(&env)) {
      policy = std::make_unique<SoftmaxTabularPolicy>(tab->state_count(), tab->action_count());
    } else {
      policy = std::make_unique<GaussianMlpPolicy>(env.spec().state_dim, env.spec().action_dim);
    }
    for (int seed = 0; seed < seeds; ++seed) {
      Rng rng = make_rng(static_cast<std::uint64_t>(seed), 0xc6 + e);
      const Vector theta = policy->initial_params(rng);
      const TrajectoryBatch batch = collect(env, *policy, theta, {1000, 1}, rng);
      const LinearOperator op = make_kl_hvp(*policy, theta, batch.states, 0.1);
      const Vector rhs = policy_gradient(batch, *policy, theta, normalize(randn(rng, batch.size())));
      const CgResult r = cg_solve(op, rhs, 200, 1e-8);
      st.max_cg_residual = std::max(st.max_cg_residual, r.relative_residual);
      st.max_cg_iterations = std::max(st.max_cg_iterations, r.iterations);
      row(seed, ("cg_" + env.name()).c_str(), r.relative_residual, r.iterations);
    }
  }
  st.seconds = seconds_since(t0);
  return st;
}

TabularOracleStats run_tabular_oracle(const TabularOracleOptions& options) {
  const auto t0 = Clock::now();
  TabularOracleStats st;
  const TabularCmdp env = make_chain_fixture();
  st.d0 = env.spec().d0();
  st.d1 = env.spec().cost_limit(0);
  st.oracle = enumerate_constrained_optimum(env, st.d0, st.d1);
  const SoftmaxTabularPolicy policy(env.state_count(), env.action_count());
  AlgoConfig algo;
  algo.algorithm = Algorithm::seps;
  algo.d0 = st.d0;
  algo.d1 = st.d1;
  algo.epochs = options.epochs;
  algo.steps_per_epoch = options.steps_per_epoch;
  const TrainResult result = train(env, policy, algo, options.seed);
  st.reports = result.reports;
  st.seps = exact_policy_returns(env, policy.table(result.params));
  st.relative_gap = std::abs(st.seps.user - st.oracle.returns.user) / std::abs(st.oracle.returns.user);
  st.seconds = seconds_since(t0);
  return st;
}

SuiteReport run_suite(const std::string& tag) {
  SuiteReport rep;
  rep.suite = tag;
  char buf[256];
  auto line = [&](const char* fmt_text, auto... args) {
    std::snprintf(buf, sizeof buf, fmt_text, args...);
    rep.lines.emplace_back(buf);
  };
  if (tag == "dual-sweep") {
    const DualSweepStats st = run_dual_sweep(1000, 20240601, &rep.csv);
    rep.passed = st.failures == 0 && st.max_relative_objective_error <= 1e-4 && st.max_kkt_residual <= 1e-6 &&
                 st.seconds <= 60.0;
    line("instances: %d  failures: %d", st.instances, st.failures);
    line("max relative objective error vs primal oracle: %.3e (limit 1e-4)", st.max_relative_objective_error);
    line("max KKT residual: %.3e (limit 1e-6)", st.max_kkt_residual);
    line("max relative duality gap: %.3e", st.max_duality_gap);
    line("max trust-region excess: %.3e", st.max_trust_region_excess);
    line("cases: both_active %d, only_c0_active %d, only_c1_active %d, none_active %d", st.case_counts[0],
         st.case_counts[1], st.case_counts[2], st.case_counts[3]);
    line("runtime: %.2f s (limit 60 s)", st.seconds);
  } else if (tag == "grad-check") {
    const GradCheckStats st = run_grad_check(10, 64, &rep.csv);
    rep.passed = st.max_grad_log_prob_error <= 1e-4 && st.max_softmax_grad_error <= 1e-4 &&
                 st.max_hvp_error <= 1e-3 && st.max_cg_residual <= 1e-8 && st.max_cg_iterations <= 200;
    line("grad_log_prob (gaussian) max relative error: %.3e (limit 1e-4)", st.max_grad_log_prob_error);
    line("grad_log_prob (softmax) max relative error: %.3e (limit 1e-4)", st.max_softmax_grad_error);
    line("KL Hessian-vector product max relative error: %.3e (limit 1e-3)", st.max_hvp_error);
    line("CG max relative residual: %.3e (limit 1e-8), max iterations %d (limit 200)", st.max_cg_residual,
         st.max_cg_iterations);
    line("runtime: %.2f s", st.seconds);
  } else if (tag == "tabular-oracle") {
    const TabularOracleStats st = run_tabular_oracle({});
    rep.passed = st.oracle.feasible && st.relative_gap <= 0.05 && st.seps.task >= st.d0 - 0.02 &&
                 st.seps.cost <= st.d1 + 0.02;
    rep.csv = oracle_csv_header() + ",seps_J_u,seps_J_R,seps_J_C1,relative_gap\n";
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g\n", st.seps.user, st.seps.task, st.seps.cost,
                  st.relative_gap);
    rep.csv += oracle_csv_row(st.oracle) + buf;
    line("oracle J_u %.6f  J_R %.6f  J_C1 %.6f (%llu policies)", st.oracle.returns.user, st.oracle.returns.task,
         st.oracle.returns.cost, static_cast<unsigned long long>(st.oracle.enumerated));
    line("SEPS   J_u %.6f  J_R %.6f  J_C1 %.6f (exact, after %zu epochs)", st.seps.user, st.seps.task, st.seps.cost,
         st.reports.size());
    line("relative J_u gap %.4f (limit 0.05); J_R >= %.2f and J_C1 <= %.2f required", st.relative_gap,
         st.d0 - 0.02, st.d1 + 0.02);
    line("runtime: %.2f s", st.seconds);
  } else {
    throw ConfigError("unknown verify suite '" + tag + "' (expected dual-sweep, grad-check, tabular-oracle)");
  }
  return rep;
}

}  // namespace seps::harness
