#include "seps/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace seps {

double TrajectoryBatch::mean_return(int stream, bool discounted) const {
  const auto& r = (discounted ? episode_returns : episode_undiscounted).at(static_cast<std::size_t>(stream));
  if (r.empty()) throw EstimationError("TrajectoryBatch: no completed episode");
  return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
}

double TrajectoryBatch::return_standard_error(int stream, bool discounted) const {
  const auto& r = (discounted ? episode_returns : episode_undiscounted).at(static_cast<std::size_t>(stream));
  if (r.size() < 2) return 0.0;
  const double mean = mean_return(stream, discounted);
  double ss = 0.0;
  for (double x : r) ss += (x - mean) * (x - mean);
  const auto n = static_cast<double>(r.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

namespace {

TrajectoryBatch collect_single(const Environment& env, const Policy& policy, const Vector& params,
                               Eigen::Index steps, Rng& rng) {
  const CmdpSpec& spec = env.spec();
  const int streams = 2 + spec.cost_stream_count;
  TrajectoryBatch b;
  b.states.resize(spec.state_dim, steps);
  b.actions.resize(policy.action_dim(), steps);
  b.next_states.resize(spec.state_dim, steps);
  b.log_probs.resize(steps);
  b.rewards.assign(static_cast<std::size_t>(streams), Vector(steps));
  b.terminals.assign(static_cast<std::size_t>(steps), false);
  b.episode_ends.assign(static_cast<std::size_t>(steps), false);
  b.episode_returns.assign(static_cast<std::size_t>(streams), {});
  b.episode_undiscounted.assign(static_cast<std::size_t>(streams), {});

  std::vector<double> disc(static_cast<std::size_t>(streams), 0.0);
  std::vector<double> undisc(static_cast<std::size_t>(streams), 0.0);
  double discount = 1.0;
  int t = 0;
  Vector state = env.reset(rng);
  for (Eigen::Index n = 0; n < steps; ++n) {
    ActionSample a = policy.sample(params, state, rng);
    Transition tr = env.step(state, a.action, rng);
    b.states.col(n) = state;
    b.actions.col(n) = a.action;
    b.next_states.col(n) = tr.next_state;
    b.log_probs(n) = a.log_prob;
    b.rewards[kUserStream](n) = tr.reward_u;
    b.rewards[kTaskStream](n) = tr.reward_a;
    for (int i = 0; i < spec.cost_stream_count; ++i) b.rewards[static_cast<std::size_t>(cost_stream(i))](n) = tr.costs(i);
    for (int k = 0; k < streams; ++k) {
      const double r = b.rewards[static_cast<std::size_t>(k)](n);
      disc[static_cast<std::size_t>(k)] += discount * r;
      undisc[static_cast<std::size_t>(k)] += r;
    }
    discount *= spec.gamma;
    ++t;
    const bool finished = tr.done || t >= spec.horizon;
    b.terminals[static_cast<std::size_t>(n)] = tr.done;
    if (finished) {
      b.episode_ends[static_cast<std::size_t>(n)] = true;
      for (int k = 0; k < streams; ++k) {
        b.episode_returns[static_cast<std::size_t>(k)].push_back(disc[static_cast<std::size_t>(k)]);
        b.episode_undiscounted[static_cast<std::size_t>(k)].push_back(undisc[static_cast<std::size_t>(k)]);
      }
      std::fill(disc.begin(), disc.end(), 0.0);
      std::fill(undisc.begin(), undisc.end(), 0.0);
      discount = 1.0;
      t = 0;
      state = env.reset(rng);
    } else {
      state = tr.next_state;
    }
  }
  if (steps > 0) b.episode_ends.back() = true;
  return b;
}

TrajectoryBatch concatenate(std::vector<TrajectoryBatch>& parts) {
  if (parts.size() == 1) return std::move(parts.front());
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  TrajectoryBatch out;
  const auto& first = parts.front();
  out.states.resize(first.states.rows(), total);
  out.actions.resize(first.actions.rows(), total);
  out.next_states.resize(first.next_states.rows(), total);
  out.log_probs.resize(total);
  out.rewards.assign(first.rewards.size(), Vector(total));
  out.episode_returns.assign(first.episode_returns.size(), {});
  out.episode_undiscounted.assign(first.episode_undiscounted.size(), {});
  Eigen::Index offset = 0;
  for (auto& p : parts) {
    const Eigen::Index n = p.size();
    out.states.middleCols(offset, n) = p.states;
    out.actions.middleCols(offset, n) = p.actions;
    out.next_states.middleCols(offset, n) = p.next_states;
    out.log_probs.segment(offset, n) = p.log_probs;
    for (std::size_t k = 0; k < p.rewards.size(); ++k) {
      out.rewards[k].segment(offset, n) = p.rewards[k];
      out.episode_returns[k].insert(out.episode_returns[k].end(), p.episode_returns[k].begin(),
                                    p.episode_returns[k].end());
      out.episode_undiscounted[k].insert(out.episode_undiscounted[k].end(), p.episode_undiscounted[k].begin(),
                                         p.episode_undiscounted[k].end());
    }
    out.terminals.insert(out.terminals.end(), p.terminals.begin(), p.terminals.end());
    out.episode_ends.insert(out.episode_ends.end(), p.episode_ends.begin(), p.episode_ends.end());
    offset += n;
  }
  return out;
}

}  // namespace

TrajectoryBatch collect(const Environment& env, const Policy& policy, const Vector& params,
                        const CollectOptions& options, Rng& rng) {
  require(options.workers >= 1, "collect: at least one worker required");
  require(options.steps >= env.spec().horizon, "collect: steps per epoch must cover at least one horizon");
  require(policy.state_dim() == env.spec().state_dim, "collect: policy and environment state dimensions differ");
  if (options.workers == 1) return collect_single(env, policy, params, options.steps, rng);

  const auto workers = static_cast<Eigen::Index>(options.workers);
  std::vector<Rng> rngs;
  for (Eigen::Index w = 0; w < workers; ++w) rngs.emplace_back(make_rng(rng(), static_cast<std::uint64_t>(w)));
  std::vector<TrajectoryBatch> parts(static_cast<std::size_t>(workers));
  std::vector<std::thread> threads;
  for (Eigen::Index w = 0; w < workers; ++w) {
    const Eigen::Index share = options.steps / workers + (w < options.steps % workers ? 1 : 0);
    threads.emplace_back([&, w, share] {
      parts[static_cast<std::size_t>(w)] = collect_single(env, policy, params, share, rngs[static_cast<std::size_t>(w)]);
    });
  }
  for (auto& th : threads) th.join();
  return concatenate(parts);
}

double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

Vector gae_advantages(const TrajectoryBatch& batch, const Vector& rewards, const Vector& values,
                      const Vector& next_values, double gamma, double lam) {
  const Eigen::Index n = batch.size();
  require(rewards.size() == n && values.size() == n && next_values.size() == n,
          "gae_advantages: array lengths must match the batch");
  Vector adv(n);
  double running = 0.0;
  for (Eigen::Index t = n; t-- > 0;) {
    const auto ut = static_cast<std::size_t>(t);
    const double bootstrap = batch.terminals[ut] ? 0.0 : next_values(t);
    const double delta = rewards(t) + gamma * bootstrap - values(t);
    if (batch.episode_ends[ut]) running = 0.0;
    running = delta + gamma * lam * running;
    adv(t) = running;
  }
  return adv;
}

Vector rewards_to_go(const TrajectoryBatch& batch, const Vector& rewards, const Vector& next_values, double gamma) {
  const Eigen::Index n = batch.size();
  require(rewards.size() == n && next_values.size() == n, "rewards_to_go: array lengths must match the batch");
  Vector out(n);
  double running = 0.0;
  for (Eigen::Index t = n; t-- > 0;) {
    const auto ut = static_cast<std::size_t>(t);
    if (batch.episode_ends[ut]) running = batch.terminals[ut] ? 0.0 : next_values(t);
    running = rewards(t) + gamma * running;
    out(t) = running;
  }
  return out;
}

Vector normalize(const Vector& x) {
  if (x.size() == 0) return x;
  const double mean = x.mean();
  Vector centered = x.array() - mean;
  const double std = std::sqrt(centered.squaredNorm() / static_cast<double>(x.size()));
  if (std < 1e-12) return Vector::Zero(x.size());
  return centered / std;
}

std::vector<double> constraint_surpluses(const TrajectoryBatch& batch, const CmdpSpec& spec, bool discounted) {
  if (batch.completed_episodes() == 0) {
    throw EstimationError("constraint_surpluses: the batch holds no completed episode");
  }
  std::vector<double> c;
  c.push_back(spec.d0() - batch.mean_return(kTaskStream, discounted));
  for (int i = 0; i < spec.cost_stream_count; ++i) {
    c.push_back(batch.mean_return(cost_stream(i), discounted) - spec.cost_limit(i));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Value functions
// ---------------------------------------------------------------------------

namespace {

std::vector<int> value_sizes(int in, const std::vector<int>& hidden) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(1);
  return s;
}

}  // namespace

MlpValueFunction::MlpValueFunction(int state_dim, Options options, Rng& rng)
    : options_(std::move(options)), net_(value_sizes(state_dim, options_.hidden)) {
  params_ = Vector(net_.param_count());
  net_.initialize(params_, rng, 1.0);
  adam_m_ = Vector::Zero(params_.size());
  adam_v_ = Vector::Zero(params_.size());
}

Vector MlpValueFunction::predict(const Matrix& states) const { return net_.forward(params_, states).row(0).transpose(); }

double MlpValueFunction::loss(const Matrix& states, const Vector& targets) const {
  return (predict(states) - targets).squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, targets.size()));
}

std::pair<double, double> MlpValueFunction::fit(const Matrix& states, const Vector& targets, Rng& rng) {
  require(states.cols() == targets.size(), "MlpValueFunction::fit: batch length mismatch");
  const double before = loss(states, targets);
  const Vector saved = params_;
  const Vector saved_m = adam_m_;
  const Vector saved_v = adam_v_;
  const long saved_t = adam_t_;

  const Eigen::Index n = states.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  for (int pass = 0; pass < options_.passes; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += options_.minibatch) {
      const Eigen::Index m = std::min(options_.minibatch, n - start);
      Matrix xs(states.rows(), m);
      Vector ys(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index idx = order[static_cast<std::size_t>(start + j)];
        xs.col(j) = states.col(idx);
        ys(j) = targets(idx);
      }
      Mlp::Tape tape;
      const Matrix pred = net_.forward(params_, xs, &tape);
      const Matrix cot = (2.0 / static_cast<double>(m)) * (pred.row(0).transpose() - ys).transpose();
      Vector grad = Vector::Zero(params_.size());
      net_.backward(params_, tape, cot, grad);
      ++adam_t_;
      adam_m_ = kBeta1 * adam_m_ + (1.0 - kBeta1) * grad;
      adam_v_ = kBeta2 * adam_v_ + (1.0 - kBeta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_t_));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_t_));
      params_.array() -= options_.learning_rate * (adam_m_.array() / c1) / ((adam_v_.array() / c2).sqrt() + kEps);
    }
  }
  double after = loss(states, targets);
  if (!(after <= before)) {
    params_ = saved;
    adam_m_ = saved_m;
    adam_v_ = saved_v;
    adam_t_ = saved_t;
    after = before;
  }
  return {before, after};
}

TabularValueFunction::TabularValueFunction(int state_count) : values_(Vector::Zero(state_count)) {}

Vector TabularValueFunction::predict(const Matrix& states) const {
  require(states.rows() == 1, "TabularValueFunction: states must be indices");
  Vector out(states.cols());
  for (Eigen::Index n = 0; n < states.cols(); ++n) {
    const long s = std::lround(states(0, n));
    require(s >= 0 && s < values_.size(), "TabularValueFunction: state index out of range");
    out(n) = values_(s);
  }
  return out;
}

double TabularValueFunction::loss(const Matrix& states, const Vector& targets) const {
  return (predict(states) - targets).squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, targets.size()));
}

std::pair<double, double> TabularValueFunction::fit(const Matrix& states, const Vector& targets, Rng& /*rng*/) {
  require(states.cols() == targets.size(), "TabularValueFunction::fit: batch length mismatch");
  const double before = loss(states, targets);
  Vector sums = Vector::Zero(values_.size());
  Vector counts = Vector::Zero(values_.size());
  for (Eigen::Index n = 0; n < states.cols(); ++n) {
    const long s = std::lround(states(0, n));
    sums(s) += targets(n);
    counts(s) += 1.0;
  }
  for (Eigen::Index s = 0; s < values_.size(); ++s) {
    if (counts(s) > 0.0) values_(s) = sums(s) / counts(s);
  }
  return {before, loss(states, targets)};
}

std::unique_ptr<ValueFunction> make_value_function(const Environment& env, Rng& rng) {
  if (const auto* tab = dynamic_cast<const TabularCmdp*>(&env)) {
    return std::make_unique<TabularValueFunction>(tab->state_count());
  }
  return std::make_unique<MlpValueFunction>(env.spec().state_dim, MlpValueFunction::Options{}, rng);
}

}  // namespace seps
