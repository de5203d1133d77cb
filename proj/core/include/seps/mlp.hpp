#pragma once

#include <string>
#include <vector>

#include "seps/common.hpp"

namespace seps {

/// Fully connected network with tanh hidden units and a linear output layer,
/// evaluated column-wise on batches. Parameters live in a caller-owned flat
/// vector laid out layer by layer as [W (column-major, out x in), b].
///
/// Differentiation is written out by hand: `backward` is reverse mode
/// (vector-Jacobian products summed over the batch) and `jvp` is forward mode
/// (Jacobian-vector products per column).
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> layer_sizes);

  /// Activations of one forward pass, kept for the derivative passes.
  struct Tape {
    std::vector<Matrix> activations;  // activations[0] is the input batch
  };

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  Eigen::Index param_count() const { return param_count_; }

  /// Returns the output batch (output_dim x N); fills `tape` when non-null.
  Matrix forward(const Eigen::Ref<const Vector>& params, const Eigen::Ref<const Matrix>& inputs,
                 Tape* tape = nullptr) const;

  /// Adds sum_n J_n^T output_cotangent[:, n] to `grad`.
  void backward(const Eigen::Ref<const Vector>& params, const Tape& tape,
                const Eigen::Ref<const Matrix>& output_cotangent, Eigen::Ref<Vector> grad) const;

  /// Per-column J_n * direction, returned as output_dim x N.
  Matrix jvp(const Eigen::Ref<const Vector>& params, const Tape& tape,
             const Eigen::Ref<const Vector>& direction) const;

  /// Glorot-uniform weights, zero biases; the output layer is scaled by `output_scale`.
  void initialize(Eigen::Ref<Vector> params, Rng& rng, double output_scale = 1.0) const;

  std::string describe() const;

 private:
  struct LayerOffsets {
    Eigen::Index weights;
    Eigen::Index bias;
    int in;
    int out;
  };

  std::vector<int> sizes_;
  std::vector<LayerOffsets> layers_;
  Eigen::Index param_count_ = 0;
};

}  // namespace seps
