#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "seps/common.hpp"
#include "seps/dual_solver.hpp"
#include "seps/engine.hpp"
#include "seps/oracle.hpp"

namespace seps::harness {

// ---------------------------------------------------------------------------
// Primal QP oracle for the two-constraint trust-region subproblem
// ---------------------------------------------------------------------------

struct DenseSubproblem {
  Matrix H;
  Vector ghat;
  Vector bhat0;
  Vector bhat1;
  double c0 = 0.0;
  double c1 = 0.0;
  bool has_c0 = true;
  bool has_c1 = true;
  double delta = 1.0;
};

struct QpSolution {
  bool feasible = false;
  Vector x;
  double objective = 0.0;
};

/// min ghat^T x s.t. bhat_i^T x + c_i <= 0, 0.5 x^T H x <= delta, solved
/// directly on the primal: whitening with H = L L^T turns the trust region
/// into a ball, and the optimum is the best feasible point among the ball-only
/// solution, each plane-sphere circle and the two-plane line on the sphere.
QpSolution solve_qp_oracle(const DenseSubproblem& p);

/// Projected gradient in the whitened space with a Dykstra projection onto
/// ball and half-spaces; slow, used to cross-check solve_qp_oracle.
QpSolution solve_qp_projected_gradient(const DenseSubproblem& p, int iterations, double step);

/// Canonical subproblem with exact dense H^{-1} products.
CanonicalSubproblem dense_canonical(const DenseSubproblem& p);

/// Seeded instance: dimension in [min_dim, max_dim], SPD H, Gaussian gradients,
/// constraint offsets chosen so x = 0 is strictly feasible.
DenseSubproblem random_feasible_instance(Rng& rng, int min_dim, int max_dim);

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

struct DualSweepStats {
  int instances = 0;
  double max_relative_objective_error = 0.0;
  double max_kkt_residual = 0.0;
  double max_duality_gap = 0.0;
  double max_trust_region_excess = 0.0;
  std::array<int, 4> case_counts{};
  int failures = 0;
  double seconds = 0.0;
};

/// Analytic solver versus the primal oracle. Per-instance rows go to `csv` when non-null.
DualSweepStats run_dual_sweep(int instances, std::uint64_t seed, std::string* csv = nullptr,
                              double objective_tol = 1e-4, double kkt_tol = 1e-6);

struct GradCheckStats {
  /// Max over seeds of ||analytic - fd|| / ||fd|| on the sampled coordinates.
  double max_grad_log_prob_error = 0.0;
  double max_softmax_grad_error = 0.0;
  double max_hvp_error = 0.0;
  double max_cg_residual = 0.0;
  int max_cg_iterations = 0;
  int seeds = 0;
  int coordinates = 0;
  double seconds = 0.0;
};

GradCheckStats run_grad_check(int seeds, int coordinates, std::string* csv = nullptr);

struct TabularOracleOptions {
  std::uint64_t seed = 1;
  int epochs = 500;
  Eigen::Index steps_per_epoch = 2000;
};

struct TabularOracleStats {
  OracleResult oracle;
  ExactReturns seps;
  double d0 = 0.0;
  double d1 = 0.0;
  double relative_gap = 0.0;
  std::vector<EpochReport> reports;
  double seconds = 0.0;
};

TabularOracleStats run_tabular_oracle(const TabularOracleOptions& options);

struct SuiteReport {
  std::string suite;
  bool passed = false;
  std::vector<std::string> lines;
  std::string csv;
};

/// Runs a suite by tag ("dual-sweep", "grad-check", "tabular-oracle") with its
/// acceptance thresholds. Throws ConfigError on an unknown tag.
SuiteReport run_suite(const std::string& tag);

}  // namespace seps::harness
