#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace seps {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Matrix-free symmetric operator v -> A v.
using LinearOperator = std::function<Vector(const Vector&)>;

/// Raised when a caller breaks an operation's preconditions (bad dimensions, bad ranges).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values or a solver that cannot make progress.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sample-based estimates that cannot be formed from the given batch.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stream layout shared by batches, estimators and the engine:
/// index 0 is the surrogate explicability reward u_H, index 1 the task reward R_A,
/// and index 2 + i the i-th safety cost C_{i+1}.
inline constexpr int kUserStream = 0;
inline constexpr int kTaskStream = 1;
constexpr int cost_stream(int i) { return 2 + i; }

/// Derives an independent generator from a base seed and a small integer tag.
inline Rng make_rng(std::uint64_t seed, std::uint64_t tag = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                    0x5e95u};
  return Rng(seq);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace seps
