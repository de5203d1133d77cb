#include "seps/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace seps {

Matrix deterministic_table(const std::vector<int>& actions, int action_count) {
  Matrix t = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), action_count);
  for (std::size_t s = 0; s < actions.size(); ++s) t(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  return t;
}

OracleResult enumerate_constrained_optimum(const TabularCmdp& env, double d0, double d1) {
  const int states = env.state_count();
  const int acts = env.action_count();
  require(std::pow(double(acts), double(states)) <= kOracleEnumerationLimit,
          "enumerate_constrained_optimum: " + std::to_string(acts) + "^" + std::to_string(states) +
              " deterministic policies exceed the enumeration limit");
  OracleResult best;
  std::vector<int> actions(static_cast<std::size_t>(states), 0);
  bool any_c0 = false;
  bool any_c1 = false;
  while (true) {
    const ExactReturns r = exact_policy_returns(env, deterministic_table(actions, acts));
    ++best.enumerated;
    const bool ok0 = r.task >= d0;
    const bool ok1 = r.cost <= d1;
    any_c0 = any_c0 || ok0;
    any_c1 = any_c1 || ok1;
    if (ok0 && ok1) {
      const bool better = !best.feasible || r.user > best.returns.user ||
                          (r.user == best.returns.user && r.task > best.returns.task);
      if (better) {
        best.feasible = true;
        best.actions = actions;
        best.returns = r;
      }
    }
    // Next action vector in lexicographic order (state 0 most significant).
    int s = states - 1;
    while (s >= 0 && actions[static_cast<std::size_t>(s)] == acts - 1) actions[static_cast<std::size_t>(s--)] = 0;
    if (s < 0) break;
    ++actions[static_cast<std::size_t>(s)];
  }
  if (best.feasible) {
    best.table = deterministic_table(best.actions, acts);
    best.satisfies_c0 = true;
    best.satisfies_c1 = true;
  } else {
    best.satisfies_c0 = any_c0;
    best.satisfies_c1 = any_c1;
  }
  return best;
}

std::string oracle_csv_header() { return "feasible,actions,J_u,J_R,J_C1,satisfies_c0,satisfies_c1,enumerated"; }

std::string oracle_csv_row(const OracleResult& r) {
  std::string acts;
  for (int a : r.actions) acts += std::to_string(a);
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g,%.17g,%d,%d,%llu", int(r.feasible), acts.c_str(), r.returns.user,
                r.returns.task, r.returns.cost, int(r.satisfies_c0), int(r.satisfies_c1),
                static_cast<unsigned long long>(r.enumerated));
  return buf;
}

std::string oracle_report(const OracleResult& r, double d0, double d1) {
  std::ostringstream os;
  os << "policies enumerated: " << r.enumerated << "\n";
  os << "limits: J_R >= " << d0 << ", J_C1 <= " << d1 << "\n";
  if (!r.feasible) {
    os << "result: infeasible\n";
    os << "  some policy satisfies C0 alone: " << (r.satisfies_c0 ? "yes" : "no") << "\n";
    os << "  some policy satisfies C1 alone: " << (r.satisfies_c1 ? "yes" : "no") << "\n";
    return os.str();
  }
  os << "result: feasible\n";
  os << "  actions by state:";
  for (int a : r.actions) os << ' ' << a;
  os << "\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "  J_u = %.10g\n  J_R = %.10g\n  J_C1 = %.10g\n", r.returns.user, r.returns.task,
                r.returns.cost);
  os << buf;
  return os.str();
}

}  // namespace seps
