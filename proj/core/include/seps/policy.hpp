#pragma once

#include <memory>
#include <string>
#include <vector>

#include "seps/common.hpp"
#include "seps/mlp.hpp"

namespace seps {

struct ActionSample {
  Vector action;
  double log_prob = 0.0;
};

/// A differentiable family of stochastic policies pi_theta(a | s). The family
/// object is immutable and holds only the architecture; every operation takes the
/// flat parameter vector theta explicitly, so candidate parameters can be
/// evaluated without copying the policy. Batches are passed column-wise
/// (states: state_dim x N, actions: action_dim x N).
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string descriptor() const = 0;
  virtual Eigen::Index param_count() const = 0;
  virtual int state_dim() const = 0;
  /// Length of an action vector (1 for discrete policies, which store the index).
  virtual int action_dim() const = 0;

  virtual Vector initial_params(Rng& rng) const = 0;

  virtual ActionSample sample(const Vector& params, const Vector& state, Rng& rng) const = 0;
  virtual Vector log_probs(const Vector& params, const Matrix& states, const Matrix& actions) const = 0;
  /// sum_n weights[n] * grad_theta log pi(actions[:, n] | states[:, n]).
  virtual Vector weighted_grad_log_prob(const Vector& params, const Matrix& states,
                                        const Matrix& actions, const Vector& weights) const = 0;
  virtual Vector entropies(const Vector& params, const Matrix& states) const = 0;
  /// Per-state KL(pi_new(.|s) || pi_old(.|s)).
  virtual Vector kls(const Vector& params_new, const Vector& params_old, const Matrix& states) const = 0;
  /// Gradient of the mean KL with respect to params_new.
  virtual Vector grad_mean_kl(const Vector& params_new, const Vector& params_old,
                              const Matrix& states) const = 0;
  /// Hessian of the mean KL with respect to params_new, evaluated at
  /// params_new = params_old = params, applied to v. At that point the
  /// second-order terms of the network vanish and the product is the exact
  /// Jacobian sandwich J^T M J v, where M is the Hessian of the closed-form KL
  /// in the distribution parameters.
  virtual Vector kl_hessian_product(const Vector& params, const Matrix& states, const Vector& v) const = 0;
  /// kl_hessian_product bound to fixed params and states. Implementations may
  /// cache per-batch work; the operator owns copies of its inputs.
  virtual LinearOperator kl_hessian_operator(const Vector& params, const Matrix& states) const;
};

// Convenience single-sample wrappers over the batched interface.
double log_prob(const Policy& policy, const Vector& params, const Vector& state, const Vector& action);
Vector grad_log_prob(const Policy& policy, const Vector& params, const Vector& state, const Vector& action);
double entropy(const Policy& policy, const Vector& params, const Vector& state);
/// Mean over states of KL(pi_new || pi_old); requires at least one state.
double mean_kl(const Policy& policy, const Vector& params_new, const Vector& params_old, const Matrix& states);

inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 2.0;

struct GaussianAction {
  Vector mean;
  Vector log_std;
  Vector action;
  double log_prob = 0.0;
};

/// Diagonal Gaussian with an MLP mean (tanh hidden layers) and
/// state-independent log standard deviations, clamped to [-5, 2] where used.
/// Parameter layout: [MLP parameters, log_std].
class GaussianMlpPolicy final : public Policy {
 public:
  GaussianMlpPolicy(int state_dim, int action_dim, std::vector<int> hidden = {32, 32},
                    double initial_log_std = -0.5);

  std::string descriptor() const override;
  Eigen::Index param_count() const override { return mlp_.param_count() + action_dim_; }
  int state_dim() const override { return mlp_.input_dim(); }
  int action_dim() const override { return action_dim_; }
  const Mlp& mean_network() const { return mlp_; }

  Vector initial_params(Rng& rng) const override;
  GaussianAction act(const Vector& params, const Vector& state, Rng& rng) const;
  ActionSample sample(const Vector& params, const Vector& state, Rng& rng) const override;
  Vector log_probs(const Vector& params, const Matrix& states, const Matrix& actions) const override;
  Vector weighted_grad_log_prob(const Vector& params, const Matrix& states, const Matrix& actions,
                                const Vector& weights) const override;
  Vector entropies(const Vector& params, const Matrix& states) const override;
  Vector kls(const Vector& params_new, const Vector& params_old, const Matrix& states) const override;
  Vector grad_mean_kl(const Vector& params_new, const Vector& params_old,
                      const Matrix& states) const override;
  Vector kl_hessian_product(const Vector& params, const Matrix& states, const Vector& v) const override;
  LinearOperator kl_hessian_operator(const Vector& params, const Matrix& states) const override;

  Matrix means(const Vector& params, const Matrix& states) const;
  /// Clamped log standard deviations.
  Vector log_std(const Vector& params) const;

  /// Structured view of theta: one (W, b) pair per layer, then log_std.
  struct Unpacked {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Vector log_std;
  };
  Unpacked unflatten(const Vector& params) const;
  Vector flatten(const Unpacked& unpacked) const;

 private:
  /// 1 where the raw log_std lies inside the clamp range, else 0.
  Vector log_std_mask(const Vector& params) const;

  Mlp mlp_;
  int action_dim_;
  double initial_log_std_;
};

/// Softmax over per-state logits; parameters are the row-major |S| x |A| logit
/// table. States and actions are 1-vectors carrying indices.
class SoftmaxTabularPolicy final : public Policy {
 public:
  SoftmaxTabularPolicy(int state_count, int action_count);

  std::string descriptor() const override;
  Eigen::Index param_count() const override { return Eigen::Index(states_) * actions_; }
  int state_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  int state_count() const { return states_; }
  int action_count() const { return actions_; }

  /// All-zero logits (the uniform policy).
  Vector initial_params(Rng& rng) const override;
  ActionSample sample(const Vector& params, const Vector& state, Rng& rng) const override;
  Vector log_probs(const Vector& params, const Matrix& states, const Matrix& actions) const override;
  Vector weighted_grad_log_prob(const Vector& params, const Matrix& states, const Matrix& actions,
                                const Vector& weights) const override;
  Vector entropies(const Vector& params, const Matrix& states) const override;
  Vector kls(const Vector& params_new, const Vector& params_old, const Matrix& states) const override;
  Vector grad_mean_kl(const Vector& params_new, const Vector& params_old,
                      const Matrix& states) const override;
  Vector kl_hessian_product(const Vector& params, const Matrix& states, const Vector& v) const override;

  /// Row s holds pi(. | s).
  Matrix table(const Vector& params) const;

 private:
  int index_of_state(double s) const;
  int index_of_action(double a) const;
  Vector probabilities(const Vector& params, int s) const;

  int states_;
  int actions_;
};

/// Builds a policy from a descriptor string produced by Policy::descriptor().
std::unique_ptr<Policy> make_policy(const std::string& descriptor);

/// Writes `<stem>.arch` (descriptor text) and `<stem>.f64` (raw little-endian
/// IEEE-754 doubles, one per parameter).
void save_checkpoint(const std::string& stem, const Policy& policy, const Vector& params);

struct Checkpoint {
  std::unique_ptr<Policy> policy;
  Vector params;
};
Checkpoint load_checkpoint(const std::string& stem);

}  // namespace seps
