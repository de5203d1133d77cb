#pragma once

#include <functional>

#include "seps/common.hpp"
#include "seps/estimation.hpp"
#include "seps/policy.hpp"

namespace seps {

/// Local model around theta_n, in the orientation of the update rule:
///   max g^T x  s.t.  c0 - b0^T x <= 0,  c1 + b1^T x <= 0,  0.5 x^T H x <= delta.
/// A constraint whose flag is false is absent from the problem.
struct TrustRegionSubproblem {
  Vector g;
  Vector b0;
  Vector b1;
  double c0 = 0.0;
  double c1 = 0.0;
  bool has_c0 = true;
  bool has_c1 = true;
  double delta = 0.01;
  LinearOperator hvp;
};

/// (1/N) sum_n grad log pi(a_n | s_n) * advantages[n].
Vector policy_gradient(const TrajectoryBatch& batch, const Policy& policy, const Vector& params,
                       const Vector& advantages);

/// Hessian of the mean KL over `states` at params, applied to v, plus damping * v.
Vector kl_hessian_vector_product(const Policy& policy, const Vector& params, const Matrix& states,
                                 const Vector& v, double damping);

/// Operator form of kl_hessian_vector_product; copies params and states.
LinearOperator make_kl_hvp(const Policy& policy, const Vector& params, const Matrix& states, double damping);

struct CgResult {
  Vector x;
  /// ||A x - rhs|| / ||rhs|| recomputed from the returned x (0 when rhs = 0).
  double relative_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Conjugate gradients for a symmetric positive definite operator, starting
/// from zero. Throws NumericalFailure on non-finite iterates or when the
/// operator shows non-positive curvature.
CgResult cg_solve(const LinearOperator& op, const Vector& rhs, int max_iterations = 100, double tol = 1e-8);

}  // namespace seps
