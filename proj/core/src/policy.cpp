#include "seps/policy.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

namespace seps {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

std::vector<int> with_io(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

LinearOperator Policy::kl_hessian_operator(const Vector& params, const Matrix& states) const {
  return [this, params, states](const Vector& v) { return kl_hessian_product(params, states, v); };
}

double log_prob(const Policy& policy, const Vector& params, const Vector& state, const Vector& action) {
  return policy.log_probs(params, state, action)(0);
}

Vector grad_log_prob(const Policy& policy, const Vector& params, const Vector& state, const Vector& action) {
  return policy.weighted_grad_log_prob(params, state, action, Vector::Ones(1));
}

double entropy(const Policy& policy, const Vector& params, const Vector& state) {
  return policy.entropies(params, state)(0);
}

double mean_kl(const Policy& policy, const Vector& params_new, const Vector& params_old, const Matrix& states) {
  require(states.cols() > 0, "mean_kl: empty state batch");
  return policy.kls(params_new, params_old, states).mean();
}

// ---------------------------------------------------------------------------
// GaussianMlpPolicy
// ---------------------------------------------------------------------------

GaussianMlpPolicy::GaussianMlpPolicy(int state_dim, int action_dim, std::vector<int> hidden,
                                     double initial_log_std)
    : mlp_(with_io(state_dim, hidden, action_dim)),
      action_dim_(action_dim),
      initial_log_std_(initial_log_std) {}

std::string GaussianMlpPolicy::descriptor() const { return "gaussian_mlp " + mlp_.describe(); }

Vector GaussianMlpPolicy::initial_params(Rng& rng) const {
  Vector params(param_count());
  mlp_.initialize(params.head(mlp_.param_count()), rng, 0.01);
  params.tail(action_dim_).setConstant(initial_log_std_);
  return params;
}

Vector GaussianMlpPolicy::log_std(const Vector& params) const {
  require(params.size() == param_count(), "GaussianMlpPolicy: parameter count mismatch");
  return params.tail(action_dim_).cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd);
}

Vector GaussianMlpPolicy::log_std_mask(const Vector& params) const {
  const Vector raw = params.tail(action_dim_);
  return ((raw.array() >= kMinLogStd) && (raw.array() <= kMaxLogStd)).cast<double>().matrix();
}

Matrix GaussianMlpPolicy::means(const Vector& params, const Matrix& states) const {
  require(params.size() == param_count(), "GaussianMlpPolicy: parameter count mismatch");
  return mlp_.forward(params.head(mlp_.param_count()), states);
}

GaussianAction GaussianMlpPolicy::act(const Vector& params, const Vector& state, Rng& rng) const {
  GaussianAction out;
  out.mean = means(params, state).col(0);
  out.log_std = log_std(params);
  std::normal_distribution<double> normal(0.0, 1.0);
  out.action.resize(action_dim_);
  double lp = 0.0;
  for (int j = 0; j < action_dim_; ++j) {
    const double z = normal(rng);
    out.action(j) = out.mean(j) + std::exp(out.log_std(j)) * z;
    lp += -0.5 * z * z - out.log_std(j) - kHalfLog2Pi;
  }
  out.log_prob = lp;
  return out;
}

ActionSample GaussianMlpPolicy::sample(const Vector& params, const Vector& state, Rng& rng) const {
  GaussianAction a = act(params, state, rng);
  return {std::move(a.action), a.log_prob};
}

Vector GaussianMlpPolicy::log_probs(const Vector& params, const Matrix& states, const Matrix& actions) const {
  require(actions.rows() == action_dim_ && actions.cols() == states.cols(),
          "GaussianMlpPolicy::log_probs: action batch shape mismatch");
  const Matrix mu = means(params, states);
  const Vector ls = log_std(params);
  const Eigen::ArrayXd inv_std = (-ls.array()).exp();
  const Matrix z = ((actions - mu).array().colwise() * inv_std).matrix();
  Vector out = -0.5 * z.colwise().squaredNorm().transpose();
  out.array() -= ls.sum() + action_dim_ * kHalfLog2Pi;
  return out;
}

Vector GaussianMlpPolicy::weighted_grad_log_prob(const Vector& params, const Matrix& states,
                                                 const Matrix& actions, const Vector& weights) const {
  require(actions.rows() == action_dim_ && actions.cols() == states.cols() &&
              weights.size() == states.cols(),
          "GaussianMlpPolicy::weighted_grad_log_prob: batch shape mismatch");
  require(params.size() == param_count(), "GaussianMlpPolicy: parameter count mismatch");
  Mlp::Tape tape;
  const Matrix mu = mlp_.forward(params.head(mlp_.param_count()), states, &tape);
  const Vector ls = log_std(params);
  const Eigen::ArrayXd inv_var = (-2.0 * ls.array()).exp();
  const Matrix diff = actions - mu;
  // d log pi / d mu = (a - mu) / sigma^2
  Matrix cotangent = (diff.array().colwise() * inv_var).matrix();
  cotangent.array().rowwise() *= weights.transpose().array();
  Vector grad = Vector::Zero(param_count());
  mlp_.backward(params.head(mlp_.param_count()), tape, cotangent, grad.head(mlp_.param_count()));
  // d log pi / d log_std = (a - mu)^2 / sigma^2 - 1
  const Matrix dls = ((diff.array().square().colwise() * inv_var) - 1.0).matrix();
  grad.tail(action_dim_) = (dls * weights).cwiseProduct(log_std_mask(params));
  return grad;
}

Vector GaussianMlpPolicy::entropies(const Vector& params, const Matrix& states) const {
  require(states.rows() == state_dim(), "GaussianMlpPolicy::entropies: state dimension mismatch");
  const double h = log_std(params).sum() + action_dim_ * (kHalfLog2Pi + 0.5);
  return Vector::Constant(states.cols(), h);
}

Vector GaussianMlpPolicy::kls(const Vector& params_new, const Vector& params_old, const Matrix& states) const {
  const Matrix mu_new = means(params_new, states);
  const Matrix mu_old = means(params_old, states);
  const Vector ls_new = log_std(params_new);
  const Vector ls_old = log_std(params_old);
  const Eigen::ArrayXd inv_var_old = (-2.0 * ls_old.array()).exp();
  const double var_term =
      (ls_old - ls_new).sum() +
      0.5 * ((2.0 * ls_new.array()).exp() * inv_var_old).sum() - 0.5 * action_dim_;
  const Matrix dmu = mu_new - mu_old;
  Vector out = 0.5 * (dmu.array().square().colwise() * inv_var_old).colwise().sum().transpose().matrix();
  out.array() += var_term;
  return out;
}

Vector GaussianMlpPolicy::grad_mean_kl(const Vector& params_new, const Vector& params_old,
                                       const Matrix& states) const {
  require(states.cols() > 0, "grad_mean_kl: empty state batch");
  const auto n = static_cast<double>(states.cols());
  Mlp::Tape tape;
  const Matrix mu_new = mlp_.forward(params_new.head(mlp_.param_count()), states, &tape);
  const Matrix mu_old = means(params_old, states);
  const Vector ls_new = log_std(params_new);
  const Vector ls_old = log_std(params_old);
  const Eigen::ArrayXd inv_var_old = (-2.0 * ls_old.array()).exp();
  const Matrix cotangent = (((mu_new - mu_old).array().colwise() * inv_var_old) / n).matrix();
  Vector grad = Vector::Zero(param_count());
  mlp_.backward(params_new.head(mlp_.param_count()), tape, cotangent, grad.head(mlp_.param_count()));
  const Eigen::ArrayXd dls = (2.0 * ls_new.array()).exp() * inv_var_old - 1.0;
  grad.tail(action_dim_) = dls.matrix().cwiseProduct(log_std_mask(params_new));
  return grad;
}

Vector GaussianMlpPolicy::kl_hessian_product(const Vector& params, const Matrix& states, const Vector& v) const {
  require(v.size() == param_count(), "kl_hessian_product: direction size mismatch");
  require(states.cols() > 0, "kl_hessian_product: empty state batch");
  const auto n = static_cast<double>(states.cols());
  const auto head = params.head(mlp_.param_count());
  Mlp::Tape tape;
  mlp_.forward(head, states, &tape);
  const Matrix tangent = mlp_.jvp(head, tape, v.head(mlp_.param_count()));
  const Eigen::ArrayXd inv_var = (-2.0 * log_std(params).array()).exp();
  // M = diag(1 / sigma^2) for the mean block, 2 for each log_std.
  const Matrix cotangent = ((tangent.array().colwise() * inv_var) / n).matrix();
  Vector out = Vector::Zero(param_count());
  mlp_.backward(head, tape, cotangent, out.head(mlp_.param_count()));
  const Vector mask = log_std_mask(params);
  out.tail(action_dim_) = 2.0 * v.tail(action_dim_).cwiseProduct(mask);
  return out;
}

LinearOperator GaussianMlpPolicy::kl_hessian_operator(const Vector& params, const Matrix& states) const {
  require(params.size() == param_count(), "kl_hessian_operator: parameter count mismatch");
  require(states.cols() > 0, "kl_hessian_operator: empty state batch");
  struct Cache {
    Vector head;
    Mlp::Tape tape;
    Eigen::ArrayXd inv_var;
    Vector mask;
  };
  auto cache = std::make_shared<Cache>();
  cache->head = params.head(mlp_.param_count());
  mlp_.forward(cache->head, states, &cache->tape);
  cache->inv_var = (-2.0 * log_std(params).array()).exp() / static_cast<double>(states.cols());
  cache->mask = 2.0 * log_std_mask(params);
  return [this, cache](const Vector& v) {
    require(v.size() == param_count(), "kl_hessian_product: direction size mismatch");
    const auto p = mlp_.param_count();
    const Matrix tangent = mlp_.jvp(cache->head, cache->tape, v.head(p));
    const Matrix cotangent = (tangent.array().colwise() * cache->inv_var).matrix();
    Vector out = Vector::Zero(param_count());
    mlp_.backward(cache->head, cache->tape, cotangent, out.head(p));
    out.tail(action_dim_) = v.tail(action_dim_).cwiseProduct(cache->mask);
    return out;
  };
}

GaussianMlpPolicy::Unpacked GaussianMlpPolicy::unflatten(const Vector& params) const {
  require(params.size() == param_count(), "GaussianMlpPolicy::unflatten: parameter count mismatch");
  Unpacked u;
  const auto& sizes = mlp_.layer_sizes();
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    u.weights.emplace_back(Eigen::Map<const Matrix>(params.data() + offset, out, in));
    offset += Eigen::Index(in) * out;
    u.biases.emplace_back(params.segment(offset, out));
    offset += out;
  }
  u.log_std = params.tail(action_dim_);
  return u;
}

Vector GaussianMlpPolicy::flatten(const Unpacked& unpacked) const {
  Vector params(param_count());
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < unpacked.weights.size(); ++l) {
    const Matrix& w = unpacked.weights[l];
    Eigen::Map<Matrix>(params.data() + offset, w.rows(), w.cols()) = w;
    offset += w.size();
    params.segment(offset, unpacked.biases[l].size()) = unpacked.biases[l];
    offset += unpacked.biases[l].size();
  }
  require(offset + action_dim_ == param_count(), "GaussianMlpPolicy::flatten: layout mismatch");
  params.tail(action_dim_) = unpacked.log_std;
  return params;
}

// ---------------------------------------------------------------------------
// SoftmaxTabularPolicy
// ---------------------------------------------------------------------------

SoftmaxTabularPolicy::SoftmaxTabularPolicy(int state_count, int action_count)
    : states_(state_count), actions_(action_count) {
  require(state_count > 0 && action_count > 0, "SoftmaxTabularPolicy: empty table");
}

std::string SoftmaxTabularPolicy::descriptor() const {
  return "softmax_table " + std::to_string(states_) + "x" + std::to_string(actions_);
}

Vector SoftmaxTabularPolicy::initial_params(Rng& /*rng*/) const { return Vector::Zero(param_count()); }

int SoftmaxTabularPolicy::index_of_state(double s) const {
  const long i = std::lround(s);
  require(i >= 0 && i < states_ && static_cast<double>(i) == s, "SoftmaxTabularPolicy: invalid state index");
  return static_cast<int>(i);
}

int SoftmaxTabularPolicy::index_of_action(double a) const {
  const long i = std::lround(a);
  require(i >= 0 && i < actions_ && static_cast<double>(i) == a, "SoftmaxTabularPolicy: invalid action index");
  return static_cast<int>(i);
}

Vector SoftmaxTabularPolicy::probabilities(const Vector& params, int s) const {
  const Vector z = params.segment(Eigen::Index(s) * actions_, actions_);
  const Vector e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Matrix SoftmaxTabularPolicy::table(const Vector& params) const {
  require(params.size() == param_count(), "SoftmaxTabularPolicy: parameter count mismatch");
  Matrix t(states_, actions_);
  for (int s = 0; s < states_; ++s) t.row(s) = probabilities(params, s).transpose();
  return t;
}

ActionSample SoftmaxTabularPolicy::sample(const Vector& params, const Vector& state, Rng& rng) const {
  require(state.size() == 1, "SoftmaxTabularPolicy::sample: state must be a 1-vector");
  const int s = index_of_state(state(0));
  const Vector p = probabilities(params, s);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u = u01(rng);
  int a = actions_ - 1;
  double cumulative = 0.0;
  for (int i = 0; i < actions_; ++i) {
    cumulative += p(i);
    if (u < cumulative) {
      a = i;
      break;
    }
  }
  return {Vector::Constant(1, a), std::log(p(a))};
}

Vector SoftmaxTabularPolicy::log_probs(const Vector& params, const Matrix& states, const Matrix& actions) const {
  require(params.size() == param_count(), "SoftmaxTabularPolicy: parameter count mismatch");
  require(states.rows() == 1 && actions.rows() == 1 && states.cols() == actions.cols(),
          "SoftmaxTabularPolicy::log_probs: batch shape mismatch");
  Vector out(states.cols());
  for (Eigen::Index n = 0; n < states.cols(); ++n) {
    const Vector p = probabilities(params, index_of_state(states(0, n)));
    out(n) = std::log(p(index_of_action(actions(0, n))));
  }
  return out;
}

Vector SoftmaxTabularPolicy::weighted_grad_log_prob(const Vector& params, const Matrix& states,
                                                    const Matrix& actions, const Vector& weights) const {
  require(params.size() == param_count(), "SoftmaxTabularPolicy: parameter count mismatch");
  require(states.rows() == 1 && actions.rows() == 1 && states.cols() == actions.cols() &&
              weights.size() == states.cols(),
          "SoftmaxTabularPolicy::weighted_grad_log_prob: batch shape mismatch");
  Vector grad = Vector::Zero(param_count());
  for (Eigen::Index n = 0; n < states.cols(); ++n) {
    const int s = index_of_state(states(0, n));
    const int a = index_of_action(actions(0, n));
    auto block = grad.segment(Eigen::Index(s) * actions_, actions_);
    block -= weights(n) * probabilities(params, s);
    block(a) += weights(n);
  }
  return grad;
}

Vector SoftmaxTabularPolicy::entropies(const Vector& params, const Matrix& states) const {
  Vector out(states.cols());
  for (Eigen::Index n = 0; n < states.cols(); ++n) {
    const Vector p = probabilities(params, index_of_state(states(0, n)));
    double h = 0.0;
    for (int a = 0; a < actions_; ++a) {
      if (p(a) > 0.0) h -= p(a) * std::log(p(a));
    }
    out(n) = h;
  }
  return out;
}

Vector SoftmaxTabularPolicy::kls(const Vector& params_new, const Vector& params_old, const Matrix& states) const {
  Vector out(states.cols());
  for (Eigen::Index n = 0; n < states.cols(); ++n) {
    const int s = index_of_state(states(0, n));
    const Vector p = probabilities(params_new, s);
    const Vector q = probabilities(params_old, s);
    out(n) = (p.array() * (p.array().log() - q.array().log())).sum();
  }
  return out;
}

Vector SoftmaxTabularPolicy::grad_mean_kl(const Vector& params_new, const Vector& params_old,
                                          const Matrix& states) const {
  require(states.cols() > 0, "grad_mean_kl: empty state batch");
  Vector grad = Vector::Zero(param_count());
  const auto n_states = static_cast<double>(states.cols());
  for (Eigen::Index n = 0; n < states.cols(); ++n) {
    const int s = index_of_state(states(0, n));
    const Eigen::ArrayXd p = probabilities(params_new, s).array();
    const Eigen::ArrayXd q = probabilities(params_old, s).array();
    const Eigen::ArrayXd log_ratio = p.log() - q.log();
    const double kl = (p * log_ratio).sum();
    grad.segment(Eigen::Index(s) * actions_, actions_) += (p * (log_ratio - kl)).matrix() / n_states;
  }
  return grad;
}

Vector SoftmaxTabularPolicy::kl_hessian_product(const Vector& params, const Matrix& states, const Vector& v) const {
  require(v.size() == param_count(), "kl_hessian_product: direction size mismatch");
  require(states.cols() > 0, "kl_hessian_product: empty state batch");
  // Per visited state the Hessian block is diag(p) - p p^T.
  Eigen::VectorXi visits = Eigen::VectorXi::Zero(states_);
  for (Eigen::Index n = 0; n < states.cols(); ++n) ++visits(index_of_state(states(0, n)));
  Vector out = Vector::Zero(param_count());
  const auto n_states = static_cast<double>(states.cols());
  for (int s = 0; s < states_; ++s) {
    if (visits(s) == 0) continue;
    const Vector p = probabilities(params, s);
    const auto vs = v.segment(Eigen::Index(s) * actions_, actions_);
    const Vector block = p.cwiseProduct(vs) - p * p.dot(vs);
    out.segment(Eigen::Index(s) * actions_, actions_) = (visits(s) / n_states) * block;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Construction and checkpoints
// ---------------------------------------------------------------------------

std::unique_ptr<Policy> make_policy(const std::string& descriptor) {
  std::istringstream is(descriptor);
  std::string kind;
  std::string shape;
  is >> kind >> shape;
  if (kind == "gaussian_mlp") {
    std::vector<int> sizes;
    std::istringstream ss(shape);
    std::string tok;
    while (std::getline(ss, tok, '-')) sizes.push_back(std::stoi(tok));
    if (sizes.size() < 2) throw ContractViolation("make_policy: bad gaussian_mlp shape '" + shape + "'");
    std::vector<int> hidden(sizes.begin() + 1, sizes.end() - 1);
    return std::make_unique<GaussianMlpPolicy>(sizes.front(), sizes.back(), hidden);
  }
  if (kind == "softmax_table") {
    const auto x = shape.find('x');
    if (x == std::string::npos) throw ContractViolation("make_policy: bad softmax_table shape '" + shape + "'");
    return std::make_unique<SoftmaxTabularPolicy>(std::stoi(shape.substr(0, x)), std::stoi(shape.substr(x + 1)));
  }
  throw ContractViolation("make_policy: unknown policy kind '" + kind + "'");
}

void save_checkpoint(const std::string& stem, const Policy& policy, const Vector& params) {
  require(params.size() == policy.param_count(), "save_checkpoint: parameter count mismatch");
  {
    std::ofstream arch(stem + ".arch");
    arch << policy.descriptor() << "\n" << params.size() << "\n";
    if (!arch) throw std::runtime_error("save_checkpoint: cannot write " + stem + ".arch");
  }
  std::ofstream data(stem + ".f64", std::ios::binary);
  static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
  data.write(reinterpret_cast<const char*>(params.data()),
             static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!data) throw std::runtime_error("save_checkpoint: cannot write " + stem + ".f64");
}

Checkpoint load_checkpoint(const std::string& stem) {
  std::ifstream arch(stem + ".arch");
  if (!arch) throw std::runtime_error("load_checkpoint: cannot read " + stem + ".arch");
  std::string descriptor;
  std::getline(arch, descriptor);
  Eigen::Index count = 0;
  arch >> count;
  Checkpoint cp{make_policy(descriptor), Vector(count)};
  if (cp.policy->param_count() != count) {
    throw std::runtime_error("load_checkpoint: descriptor and parameter count disagree");
  }
  std::ifstream data(stem + ".f64", std::ios::binary);
  data.read(reinterpret_cast<char*>(cp.params.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!data) throw std::runtime_error("load_checkpoint: truncated " + stem + ".f64");
  return cp;
}

}  // namespace seps
