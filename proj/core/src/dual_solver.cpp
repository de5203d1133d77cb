#include "seps/dual_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace seps {

std::string to_string(DualCase c) {
  switch (c) {
    case DualCase::both_active: return "both_active";
    case DualCase::only_c0_active: return "only_c0_active";
    case DualCase::only_c1_active: return "only_c1_active";
    case DualCase::none_active: return "none_active";
    case DualCase::recovery: return "recovery";
  }
  return "unknown";
}

double KktResiduals::max() const { return std::max({stationarity, primal_feasibility, complementary_slackness}); }

CanonicalSubproblem canonicalize(const TrustRegionSubproblem& sub, const LinearSolve& solve) {
  require(sub.delta > 0.0, "canonicalize: delta must be positive");
  require(static_cast<bool>(sub.hvp), "canonicalize: missing Hessian-vector product");
  const Eigen::Index p = sub.g.size();
  CanonicalSubproblem c;
  c.ghat = -sub.g;
  c.has_c0 = sub.has_c0;
  c.has_c1 = sub.has_c1;
  c.bhat0 = sub.has_c0 ? Vector(-sub.b0) : Vector(Vector::Zero(p));
  c.bhat1 = sub.has_c1 ? sub.b1 : Vector(Vector::Zero(p));
  require(c.bhat0.size() == p && c.bhat1.size() == p, "canonicalize: gradient lengths differ");
  c.c0 = sub.has_c0 ? sub.c0 : 0.0;
  c.c1 = sub.has_c1 ? sub.c1 : 0.0;
  c.delta = sub.delta;
  c.hvp = sub.hvp;
  c.hinv_g = solve(c.ghat);
  c.hinv_b0 = sub.has_c0 ? solve(c.bhat0) : Vector(Vector::Zero(p));
  c.hinv_b1 = sub.has_c1 ? solve(c.bhat1) : Vector(Vector::Zero(p));
  c.q = c.ghat.dot(c.hinv_g);
  c.r0 = c.ghat.dot(c.hinv_b0);
  c.r1 = c.ghat.dot(c.hinv_b1);
  c.s0 = c.bhat0.dot(c.hinv_b0);
  c.s1 = c.bhat1.dot(c.hinv_b1);
  c.t = c.bhat0.dot(c.hinv_b1);
  return c;
}

CanonicalSubproblem canonicalize(const TrustRegionSubproblem& sub, int cg_iterations, double cg_tol) {
  const LinearOperator& hvp = sub.hvp;
  return canonicalize(sub, [&](const Vector& v) { return cg_solve(hvp, v, cg_iterations, cg_tol).x; });
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
  double lo = 0.0;
  double hi = kInf;
  bool empty = false;

  // Intersects with the closure of {lambda : lambda * a > b}.
  void require_at_least(double a, double b) {
    if (a > 0.0) {
      lo = std::max(lo, b / a);
    } else if (a < 0.0) {
      hi = std::min(hi, b / a);
    } else if (b > 0.0) {
      empty = true;
    }
    if (lo > hi) empty = true;
  }
};

// f(lambda) = alpha / lambda + beta * lambda + kappa with alpha <= 0.
struct CaseFunction {
  DualCase id;
  double alpha;
  double beta;
  double kappa;
  Interval domain;

  double operator()(double lambda) const {
    if (lambda <= 0.0) return alpha < 0.0 ? -kInf : kappa;
    return alpha / lambda + beta * lambda + kappa;
  }
};

struct Candidate {
  DualCase id = DualCase::none_active;
  double lambda = 0.0;
  double value = -kInf;
};

void consider(const CaseFunction& f, Candidate& best) {
  if (f.domain.empty) return;
  std::vector<double> points{f.domain.lo};
  if (std::isfinite(f.domain.hi)) points.push_back(f.domain.hi);
  if (f.alpha < 0.0 && f.beta < 0.0) {
    points.push_back(std::clamp(std::sqrt(f.alpha / f.beta), f.domain.lo, f.domain.hi));
  }
  for (double lambda : points) {
    const double v = f(lambda);
    if (v > best.value) best = {f.id, lambda, v};
  }
}

}  // namespace

DualSolution solve_feasible(const CanonicalSubproblem& c) {
  // A constraint violated at x = 0 is fine as long as the trust region reaches its boundary.
  require(!c.has_c0 || c.c0 <= 0.0 || c.c0 * c.c0 < 2.0 * c.delta * c.s0,
          "solve_feasible: constraint 0 cannot be satisfied inside the trust region");
  require(!c.has_c1 || c.c1 <= 0.0 || c.c1 * c.c1 < 2.0 * c.delta * c.s1,
          "solve_feasible: constraint 1 cannot be satisfied inside the trust region");
  DualSolution sol;
  if (!(c.q > 0.0)) {
    sol.case_id = DualCase::none_active;
    sol.step = Vector::Zero(c.ghat.size());
    return sol;
  }

  const bool use0 = c.has_c0 && c.s0 > kDegeneracyEps;
  const bool use1 = c.has_c1 && c.s1 > kDegeneracyEps;
  const double det = c.s0 * c.s1 - c.t * c.t;
  const bool use_both = use0 && use1 && det > kDegeneracyEps * c.s0 * c.s1;

  Candidate best;
  {
    CaseFunction f4{DualCase::none_active, -0.5 * c.q, -c.delta, 0.0, {}};
    consider(f4, best);
  }
  if (use0) {
    CaseFunction f2{DualCase::only_c0_active, std::min(0.0, 0.5 * (c.r0 * c.r0 / c.s0 - c.q)),
                    0.5 * (c.c0 * c.c0 / c.s0 - 2.0 * c.delta), -c.r0 * c.c0 / c.s0, {}};
    f2.domain.require_at_least(c.c0, c.r0);
    consider(f2, best);
  }
  if (use1) {
    CaseFunction f3{DualCase::only_c1_active, std::min(0.0, 0.5 * (c.r1 * c.r1 / c.s1 - c.q)),
                    0.5 * (c.c1 * c.c1 / c.s1 - 2.0 * c.delta), -c.r1 * c.c1 / c.s1, {}};
    f3.domain.require_at_least(c.c1, c.r1);
    consider(f3, best);
  }
  if (use_both) {
    const double u = (c.s1 * c.r0 * c.r0 + c.s0 * c.r1 * c.r1 - 2.0 * c.t * c.r0 * c.r1) / det;
    const double w = (c.s1 * c.c0 * c.c0 + c.s0 * c.c1 * c.c1 - 2.0 * c.t * c.c0 * c.c1) / det;
    const double kappa = (c.t * c.r1 * c.c0 + c.t * c.r0 * c.c1 - c.s1 * c.r0 * c.c0 - c.s0 * c.r1 * c.c1) / det;
    CaseFunction f1{DualCase::both_active, std::min(0.0, 0.5 * (u - c.q)), 0.5 * (w - 2.0 * c.delta), kappa, {}};
    f1.domain.require_at_least(c.s0 * c.c1 - c.t * c.c0, c.s0 * c.r1 - c.t * c.r0);
    f1.domain.require_at_least(c.s1 * c.c0 - c.t * c.c1, c.s1 * c.r0 - c.t * c.r1);
    consider(f1, best);
  }

  sol.case_id = best.id;
  sol.lambda = best.lambda;
  sol.dual_value = best.value;
  const double lambda = best.lambda;
  switch (best.id) {
    case DualCase::both_active:
      sol.nu0 = (lambda * (c.s1 * c.c0 - c.t * c.c1) + c.t * c.r1 - c.s1 * c.r0) / det;
      sol.nu1 = (lambda * (c.s0 * c.c1 - c.t * c.c0) + c.t * c.r0 - c.s0 * c.r1) / det;
      break;
    case DualCase::only_c0_active: sol.nu0 = (lambda * c.c0 - c.r0) / c.s0; break;
    case DualCase::only_c1_active: sol.nu1 = (lambda * c.c1 - c.r1) / c.s1; break;
    default: break;
  }
  sol.nu0 = std::max(0.0, sol.nu0);
  sol.nu1 = std::max(0.0, sol.nu1);
  if (!(lambda >= kLambdaMin) || !std::isfinite(best.value)) {
    sol.degenerate = true;
    return sol;
  }
  sol.step = -(c.hinv_g + sol.nu0 * c.hinv_b0 + sol.nu1 * c.hinv_b1) / lambda;
  if (!sol.step.allFinite()) throw NumericalFailure("solve_feasible: non-finite step");
  return sol;
}

Vector fallback_step(const CanonicalSubproblem& c) {
  if (!(c.q > 0.0)) return Vector::Zero(c.ghat.size());
  return -std::sqrt(2.0 * c.delta / c.q) * c.hinv_g;
}

DualSolution solve_recovery(const Vector& b, double c, const Vector& hinv_b, double delta) {
  require(delta > 0.0, "solve_recovery: delta must be positive");
  require(b.size() == hinv_b.size(), "solve_recovery: length mismatch");
  const double s = b.dot(hinv_b);
  if (!(s > kDegeneracyEps)) {
    throw IrrecoverableConstraint("solve_recovery: violated constraint (surplus " + std::to_string(c) +
                                  ") has a vanishing gradient");
  }
  DualSolution sol;
  sol.case_id = DualCase::recovery;
  sol.phi = std::sqrt(s / (2.0 * delta));
  sol.step = -hinv_b / sol.phi;
  sol.dual_value = -s / (2.0 * sol.phi) + c - sol.phi * delta;
  return sol;
}

bool recovery_reachable(double c, double s, double delta) { return c - std::sqrt(2.0 * delta * std::max(0.0, s)) <= 0.0; }

Vector combine_recovery(const std::vector<DualSolution>& solutions, const LinearOperator& hvp, double delta) {
  require(!solutions.empty(), "combine_recovery: no recovery step given");
  Vector x = solutions.front().step;
  for (std::size_t i = 1; i < solutions.size(); ++i) x += solutions[i].step;
  if (solutions.size() == 1) return x;
  const double quad = 0.5 * x.dot(hvp(x));
  if (quad > delta) x *= std::sqrt(delta / quad);
  return x;
}

KktResiduals kkt_check(const CanonicalSubproblem& c, const DualSolution& s) {
  KktResiduals k;
  require(s.step.size() == c.ghat.size(), "kkt_check: solution has no step");
  const Vector hx = c.hvp(s.step);
  Vector grad = c.ghat + s.lambda * hx;
  const double quad = 0.5 * s.step.dot(hx);
  double feas = std::max(0.0, quad - c.delta);
  double slack = std::abs(s.lambda * (quad - c.delta));
  if (c.has_c0) {
    grad += s.nu0 * c.bhat0;
    const double g0 = c.bhat0.dot(s.step) + c.c0;
    feas = std::max(feas, g0);
    slack = std::max(slack, std::abs(s.nu0 * g0));
  }
  if (c.has_c1) {
    grad += s.nu1 * c.bhat1;
    const double g1 = c.bhat1.dot(s.step) + c.c1;
    feas = std::max(feas, g1);
    slack = std::max(slack, std::abs(s.nu1 * g1));
  }
  k.stationarity = grad.norm();
  k.primal_feasibility = feas;
  k.complementary_slackness = slack;
  return k;
}

KktResiduals kkt_check_recovery(const Vector& b, const DualSolution& s, const LinearOperator& hvp, double delta) {
  KktResiduals k;
  const Vector hx = hvp(s.step);
  const double quad = 0.5 * s.step.dot(hx);
  k.stationarity = (b + s.phi * hx).norm();
  k.primal_feasibility = std::max(0.0, quad - delta);
  k.complementary_slackness = std::abs(s.phi * (quad - delta));
  return k;
}

}  // namespace seps
