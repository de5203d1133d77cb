#include "seps/mlp.hpp"

#include <cmath>
#include <sstream>

namespace seps {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  require(sizes_.size() >= 2, "Mlp needs at least an input and an output layer");
  for (int s : sizes_) require(s > 0, "Mlp layer sizes must be positive");
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    LayerOffsets lo{offset, offset + Eigen::Index(sizes_[l]) * sizes_[l + 1], sizes_[l],
                    sizes_[l + 1]};
    offset = lo.bias + sizes_[l + 1];
    layers_.push_back(lo);
  }
  param_count_ = offset;
}

Matrix Mlp::forward(const Eigen::Ref<const Vector>& params, const Eigen::Ref<const Matrix>& inputs,
                    Tape* tape) const {
  require(params.size() == param_count_, "Mlp::forward: parameter count mismatch");
  require(inputs.rows() == input_dim(), "Mlp::forward: input dimension mismatch");
  if (tape) {
    tape->activations.clear();
    tape->activations.reserve(layers_.size() + 1);
    tape->activations.emplace_back(inputs);
  }
  Matrix h = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& lo = layers_[l];
    Eigen::Map<const Matrix> w(params.data() + lo.weights, lo.out, lo.in);
    Eigen::Map<const Vector> b(params.data() + lo.bias, lo.out);
    Matrix z = w * h;
    z.colwise() += b;
    if (l + 1 < layers_.size()) z = z.array().tanh().matrix();
    h = std::move(z);
    if (tape) tape->activations.push_back(h);
  }
  return h;
}

void Mlp::backward(const Eigen::Ref<const Vector>& params, const Tape& tape,
                   const Eigen::Ref<const Matrix>& output_cotangent, Eigen::Ref<Vector> grad) const {
  require(grad.size() == param_count_, "Mlp::backward: gradient size mismatch");
  require(tape.activations.size() == layers_.size() + 1, "Mlp::backward: tape does not match");
  Matrix delta = output_cotangent;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& lo = layers_[l];
    const Matrix& input = tape.activations[l];
    Eigen::Map<Matrix>(grad.data() + lo.weights, lo.out, lo.in).noalias() += delta * input.transpose();
    grad.segment(lo.bias, lo.out) += delta.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const Matrix> w(params.data() + lo.weights, lo.out, lo.in);
    Matrix upstream = w.transpose() * delta;
    // input is tanh output of the previous layer: d tanh = 1 - tanh^2
    delta = upstream.array() * (1.0 - input.array().square());
  }
}

Matrix Mlp::jvp(const Eigen::Ref<const Vector>& params, const Tape& tape,
                const Eigen::Ref<const Vector>& direction) const {
  require(direction.size() == param_count_, "Mlp::jvp: direction size mismatch");
  require(tape.activations.size() == layers_.size() + 1, "Mlp::jvp: tape does not match");
  const Eigen::Index n = tape.activations.front().cols();
  Matrix tangent = Matrix::Zero(input_dim(), n);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& lo = layers_[l];
    Eigen::Map<const Matrix> w(params.data() + lo.weights, lo.out, lo.in);
    Eigen::Map<const Matrix> dw(direction.data() + lo.weights, lo.out, lo.in);
    Eigen::Map<const Vector> db(direction.data() + lo.bias, lo.out);
    Matrix dz = dw * tape.activations[l];
    if (l > 0) dz.noalias() += w * tangent;
    dz.colwise() += db;
    if (l + 1 < layers_.size()) {
      dz = (dz.array() * (1.0 - tape.activations[l + 1].array().square())).matrix();
    }
    tangent = std::move(dz);
  }
  return tangent;
}

void Mlp::initialize(Eigen::Ref<Vector> params, Rng& rng, double output_scale) const {
  require(params.size() == param_count_, "Mlp::initialize: parameter count mismatch");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& lo = layers_[l];
    const double limit = std::sqrt(6.0 / (lo.in + lo.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const double scale = (l + 1 == layers_.size()) ? output_scale : 1.0;
    for (Eigen::Index i = 0; i < Eigen::Index(lo.in) * lo.out; ++i) {
      params[lo.weights + i] = scale * dist(rng);
    }
    params.segment(lo.bias, lo.out).setZero();
  }
}

std::string Mlp::describe() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < sizes_.size(); ++i) os << (i ? "-" : "") << sizes_[i];
  return os.str();
}

}  // namespace seps
