#include "seps/trust_region.hpp"

#include <cmath>

namespace seps {

Vector policy_gradient(const TrajectoryBatch& batch, const Policy& policy, const Vector& params,
                       const Vector& advantages) {
  const Eigen::Index n = batch.size();
  require(n > 0, "policy_gradient: empty batch");
  require(advantages.size() == n, "policy_gradient: one advantage per step required");
  return policy.weighted_grad_log_prob(params, batch.states, batch.actions, advantages / static_cast<double>(n));
}

Vector kl_hessian_vector_product(const Policy& policy, const Vector& params, const Matrix& states,
                                 const Vector& v, double damping) {
  require(v.size() == policy.param_count(), "kl_hessian_vector_product: direction has the wrong length");
  require(damping >= 0.0, "kl_hessian_vector_product: damping must be non-negative");
  Vector hv = policy.kl_hessian_product(params, states, v);
  if (damping != 0.0) hv += damping * v;
  return hv;
}

LinearOperator make_kl_hvp(const Policy& policy, const Vector& params, const Matrix& states, double damping) {
  require(damping >= 0.0, "make_kl_hvp: damping must be non-negative");
  LinearOperator h = policy.kl_hessian_operator(params, states);
  return [h = std::move(h), damping](const Vector& v) {
    Vector hv = h(v);
    if (damping != 0.0) hv += damping * v;
    return hv;
  };
}

CgResult cg_solve(const LinearOperator& op, const Vector& rhs, int max_iterations, double tol) {
  require(max_iterations >= 0, "cg_solve: negative iteration cap");
  CgResult out;
  out.x = Vector::Zero(rhs.size());
  const double rhs_norm = rhs.norm();
  if (!std::isfinite(rhs_norm)) throw NumericalFailure("cg_solve: non-finite right-hand side");
  if (rhs_norm == 0.0) {
    out.converged = true;
    return out;
  }
  Vector r = rhs;
  Vector p = r;
  double rr = r.squaredNorm();
  const double target = tol * rhs_norm;
  for (int k = 0; k < max_iterations; ++k) {
    const Vector ap = op(p);
    const double curvature = p.dot(ap);
    if (!std::isfinite(curvature)) throw NumericalFailure("cg_solve: non-finite operator output");
    if (curvature <= 0.0) throw NumericalFailure("cg_solve: operator is not positive definite");
    const double alpha = rr / curvature;
    out.x += alpha * p;
    r -= alpha * ap;
    out.iterations = k + 1;
    double rr_next = r.squaredNorm();
    if (std::sqrt(rr_next) <= target) {
      // The recursive residual drifts from the true one; confirm before stopping.
      r = rhs - op(out.x);
      rr_next = r.squaredNorm();
      if (std::sqrt(rr_next) <= target) break;
      p = r;
      rr = rr_next;
      continue;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  if (!out.x.allFinite()) throw NumericalFailure("cg_solve: non-finite iterate");
  out.relative_residual = (op(out.x) - rhs).norm() / rhs_norm;
  out.converged = out.relative_residual <= tol;
  return out;
}

}  // namespace seps
