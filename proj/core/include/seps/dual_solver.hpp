#pragma once

#include <array>
#include <string>
#include <vector>

#include "seps/common.hpp"
#include "seps/trust_region.hpp"

namespace seps {

inline constexpr double kDegeneracyEps = 1e-10;
inline constexpr double kLambdaMin = 1e-8;

/// Raised when a violated constraint has a (numerically) zero gradient, so no
/// step can reduce it.
class IrrecoverableConstraint : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

/// Returns H^{-1} v.
using LinearSolve = std::function<Vector(const Vector&)>;

/// Minimization form of the subproblem:
///   min ghat^T x  s.t.  bhat_i^T x + c_i <= 0 (present constraints),  0.5 x^T H x <= delta,
/// with the H^{-1} products and scalar summaries used by the closed form.
struct CanonicalSubproblem {
  Vector ghat;
  Vector bhat0;
  Vector bhat1;
  double c0 = 0.0;
  double c1 = 0.0;
  bool has_c0 = true;
  bool has_c1 = true;
  double delta = 0.01;
  LinearOperator hvp;

  Vector hinv_g;
  Vector hinv_b0;
  Vector hinv_b1;
  double q = 0.0;
  double r0 = 0.0;
  double r1 = 0.0;
  double s0 = 0.0;
  double s1 = 0.0;
  double t = 0.0;
};

enum class DualCase { both_active, only_c0_active, only_c1_active, none_active, recovery };

std::string to_string(DualCase c);

struct KktResiduals {
  double stationarity = 0.0;
  double primal_feasibility = 0.0;
  double complementary_slackness = 0.0;

  double max() const;
};

struct DualSolution {
  DualCase case_id = DualCase::none_active;
  double lambda = 0.0;
  double nu0 = 0.0;
  double nu1 = 0.0;
  double phi = 0.0;
  Vector step;
  /// Value of the dual at the returned multipliers (feasible case only).
  double dual_value = 0.0;
  /// lambda fell below kLambdaMin; `step` is empty and the caller must fall back.
  bool degenerate = false;
  KktResiduals kkt;
};

/// Maps the update-rule orientation to the minimization form (ghat = -g,
/// bhat0 = -b0, bhat1 = b1) and computes the H^{-1} products with `solve`.
CanonicalSubproblem canonicalize(const TrustRegionSubproblem& sub, const LinearSolve& solve);

/// Same, with H^{-1} products from conjugate gradients on sub.hvp.
CanonicalSubproblem canonicalize(const TrustRegionSubproblem& sub, int cg_iterations = 100, double cg_tol = 1e-8);

/// Closed-form maximizer of the dual over the four active-set cases. The
/// subproblem must have a strictly feasible point; x = 0 need not be one, but a
/// present constraint with c_i > 0 must be reachable (c_i^2 < 2 delta s_i).
DualSolution solve_feasible(const CanonicalSubproblem& canon);

/// Pure trust-region step -H^{-1} ghat scaled to the boundary, used when the
/// dual degenerates. Zero when ghat is zero.
Vector fallback_step(const CanonicalSubproblem& canon);

/// Minimizes b^T x + c over the trust region: x = -(1/phi) H^{-1} b with
/// phi = sqrt(b^T H^{-1} b / (2 delta)). Throws IrrecoverableConstraint when
/// b^T H^{-1} b <= kDegeneracyEps.
DualSolution solve_recovery(const Vector& b, double c, const Vector& hinv_b, double delta);

/// Whether the linearized constraint can reach zero inside the trust region:
/// c - sqrt(2 delta b^T H^{-1} b) <= 0.
bool recovery_reachable(double c, double s, double delta);

/// Sum of the recovery steps, rescaled so that 0.5 x^T H x <= delta.
Vector combine_recovery(const std::vector<DualSolution>& solutions, const LinearOperator& hvp, double delta);

/// Residuals of the KKT system for a feasible-case solution.
KktResiduals kkt_check(const CanonicalSubproblem& canon, const DualSolution& solution);

/// Residuals for a recovery solution of min b^T x + c s.t. 0.5 x^T H x <= delta.
KktResiduals kkt_check_recovery(const Vector& b, const DualSolution& solution, const LinearOperator& hvp,
                                double delta);

}  // namespace seps
