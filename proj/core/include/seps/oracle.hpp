#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seps/env.hpp"

namespace seps {

inline constexpr double kOracleEnumerationLimit = 1e7;

struct OracleResult {
  /// False when no deterministic policy satisfies both constraints.
  bool feasible = false;
  /// Chosen action per state and the matching one-hot table (empty when infeasible).
  std::vector<int> actions;
  Matrix table;
  ExactReturns returns;
  /// Whether the returned policy satisfies each constraint; when infeasible,
  /// whether any policy satisfies that constraint on its own.
  bool satisfies_c0 = false;
  bool satisfies_c1 = false;
  std::uint64_t enumerated = 0;
};

/// Exhaustive search over deterministic policies for the maximizer of J_u
/// subject to J_R >= d0 and J_C1 <= d1 (exact evaluation). Ties go to the
/// higher J_R, then to the lexicographically smallest action vector. Pass an
/// infinite bound to drop a constraint. Throws ContractViolation when
/// |A|^|S| exceeds kOracleEnumerationLimit.
OracleResult enumerate_constrained_optimum(const TabularCmdp& env, double d0, double d1);

Matrix deterministic_table(const std::vector<int>& actions, int action_count);

/// One-line CSV header and row for the report.
std::string oracle_csv_header();
std::string oracle_csv_row(const OracleResult& r);
/// Multi-line human-readable report.
std::string oracle_report(const OracleResult& r, double d0, double d1);

}  // namespace seps
