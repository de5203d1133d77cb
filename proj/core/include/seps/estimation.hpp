#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "seps/common.hpp"
#include "seps/env.hpp"
#include "seps/mlp.hpp"
#include "seps/policy.hpp"

namespace seps {

/// On-policy rollouts for one epoch, stored column-wise. Every per-step array
/// has the same length N. Rewards are kept per stream using the layout from
/// common.hpp (u_H, R_A, C_1, ...).
struct TrajectoryBatch {
  Matrix states;
  Matrix actions;
  Matrix next_states;
  Vector log_probs;
  std::vector<Vector> rewards;
  /// Episode terminated inside the environment at this step (no bootstrapping).
  std::vector<bool> terminals;
  /// Last step of an episode segment: termination, horizon cut, or end of batch.
  std::vector<bool> episode_ends;
  /// Per stream, filled by the estimators.
  std::vector<Vector> advantages;

  /// Per-episode returns for episodes that finished inside the batch
  /// (termination or horizon); indexed [stream][episode].
  std::vector<std::vector<double>> episode_returns;
  std::vector<std::vector<double>> episode_undiscounted;

  Eigen::Index size() const { return log_probs.size(); }
  int stream_count() const { return static_cast<int>(rewards.size()); }
  int completed_episodes() const {
    return episode_returns.empty() ? 0 : static_cast<int>(episode_returns.front().size());
  }
  /// Average per-episode return of a stream over completed episodes.
  double mean_return(int stream, bool discounted = true) const;
  /// Standard error of mean_return.
  double return_standard_error(int stream, bool discounted = true) const;
};

struct CollectOptions {
  Eigen::Index steps = 4000;
  /// Rollout workers; each runs an equal share of steps with its own
  /// generator. Batches are concatenated in worker order.
  int workers = 1;
};

TrajectoryBatch collect(const Environment& env, const Policy& policy, const Vector& params,
                        const CollectOptions& options, Rng& rng);

double discounted_return(std::span<const double> rewards, double gamma);

/// Generalized advantage estimation for one stream. `values` and
/// `next_values` are V evaluated on batch.states and batch.next_states.
Vector gae_advantages(const TrajectoryBatch& batch, const Vector& rewards, const Vector& values,
                      const Vector& next_values, double gamma, double lam);

/// Discounted reward-to-go within each episode segment, bootstrapped with
/// next_values where a segment is cut without termination.
Vector rewards_to_go(const TrajectoryBatch& batch, const Vector& rewards, const Vector& next_values, double gamma);

/// Shifts to zero mean and scales to unit (population) variance; a constant
/// input maps to zeros.
Vector normalize(const Vector& x);

/// c_0 = d_0 - J_R and c_i = J_Ci - d_i from per-episode returns. Throws
/// EstimationError when the batch holds no completed episode.
std::vector<double> constraint_surpluses(const TrajectoryBatch& batch, const CmdpSpec& spec,
                                         bool discounted = true);

/// State-value regressor for one stream.
class ValueFunction {
 public:
  virtual ~ValueFunction() = default;
  virtual Vector predict(const Matrix& states) const = 0;
  /// Least-squares fit toward `targets`. Returns (loss before, loss after);
  /// the fit never leaves the regressor with a larger loss than it started.
  virtual std::pair<double, double> fit(const Matrix& states, const Vector& targets, Rng& rng) = 0;
};

/// Small tanh MLP trained with minibatch Adam.
class MlpValueFunction final : public ValueFunction {
 public:
  struct Options {
    std::vector<int> hidden{32};
    int passes = 5;
    Eigen::Index minibatch = 256;
    double learning_rate = 3e-3;
  };

  MlpValueFunction(int state_dim, Options options, Rng& rng);

  Vector predict(const Matrix& states) const override;
  std::pair<double, double> fit(const Matrix& states, const Vector& targets, Rng& rng) override;

 private:
  double loss(const Matrix& states, const Vector& targets) const;

  Options options_;
  Mlp net_;
  Vector params_;
  Vector adam_m_;
  Vector adam_v_;
  long adam_t_ = 0;
};

/// One value per discrete state; the least-squares fit is the per-state mean target.
class TabularValueFunction final : public ValueFunction {
 public:
  explicit TabularValueFunction(int state_count);

  Vector predict(const Matrix& states) const override;
  std::pair<double, double> fit(const Matrix& states, const Vector& targets, Rng& rng) override;

 private:
  double loss(const Matrix& states, const Vector& targets) const;
  Vector values_;
};

std::unique_ptr<ValueFunction> make_value_function(const Environment& env, Rng& rng);

}  // namespace seps
