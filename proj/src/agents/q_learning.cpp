#include "mbcal/agents/q_learning.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mbcal/error.hpp"

namespace mbcal::agents {

using model::SequenceNet;

std::string to_string(QTarget t) {
  switch (t) {
    case QTarget::dqn: return "dqn";
    case QTarget::ddqn: return "ddqn";
    case QTarget::mcpe: return "mcpe";
  }
  return "?";
}

std::vector<double> mcpe_targets(const data::Trajectory& traj, const data::BehaviorSpace& space,
                                 bool reward_to_go) {
  if (traj.steps.empty()) throw std::invalid_argument("mcpe_targets: empty trajectory");
  std::vector<double> out(traj.steps.size());
  double acc = 0.0;
  for (std::size_t k = traj.steps.size(); k-- > 0;) {
    acc += data::reward_of(traj.steps[k].behavior, space);
    out[k] = acc;
  }
  if (!reward_to_go) std::fill(out.begin(), out.end(), acc);
  return out;
}

std::vector<double> discounted_returns(const data::Trajectory& traj, const data::BehaviorSpace& space,
                                       double gamma) {
  std::vector<double> out(traj.steps.size());
  double acc = 0.0;
  for (std::size_t k = traj.steps.size(); k-- > 0;) {
    acc = data::reward_of(traj.steps[k].behavior, space) + gamma * acc;
    out[k] = acc;
  }
  return out;
}

double dqn_target(const SequenceNet& target, const SequenceNet::Prefix& next,
                  std::span<const int> next_candidates, double gamma, double reward,
                  const SequenceNet::InferenceCache* cache) {
  if (next_candidates.empty()) throw std::invalid_argument("dqn_target: empty candidate set");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& q : target.outputs(next, next_candidates, cache)) best = std::max(best, q[0]);
  return reward + gamma * best;
}

double ddqn_target(const SequenceNet& online, const SequenceNet::Prefix& online_next,
                   const SequenceNet& target, const SequenceNet::Prefix& target_next,
                   std::span<const int> next_candidates, double gamma, double reward,
                   const SequenceNet::InferenceCache* online_cache,
                   const SequenceNet::InferenceCache* target_cache) {
  if (next_candidates.empty()) throw std::invalid_argument("ddqn_target: empty candidate set");
  const auto q = online.outputs(online_next, next_candidates, online_cache);
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (q[i][0] > q[best][0]) best = i;
  }
  return reward + gamma * target.output(target_next, next_candidates[best], target_cache)[0];
}

QLearner::QLearner(const QConfig& config, const data::BehaviorSpace& space)
    : config_(config),
      space_(space),
      online_(config.encoder, 1, config.seed),
      target_(online_),
      adam_(online_.params()) {
  if (config.encoder.num_behaviors != space.size()) {
    throw ShapeError("Q network behavior count does not match the behavior space");
  }
  if (config.target_sync <= 0) throw std::invalid_argument("target_sync must be positive");
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  target_cache_ = target_.build_cache();
}

void QLearner::sync_target() {
  target_.params().copy_values_from(online_.params());
  target_cache_ = target_.build_cache();
}

void QLearner::refresh_caches() {
  if (config_.target == QTarget::ddqn) {
    online_cache_ = online_.build_cache();
    online_cache_valid_ = true;
  }
}

std::vector<double> QLearner::targets(const data::Trajectory& traj) const {
  if (config_.target == QTarget::mcpe) return mcpe_targets(traj, space_, config_.reward_to_go);
  const std::size_t T = traj.steps.size();
  if (T == 0) throw std::invalid_argument("Q targets: empty trajectory");
  if (traj.candidates.size() != T) {
    throw ProtocolError("trajectory " + traj.id + " lacks the candidate sets needed for value backup");
  }
  const bool double_q = config_.target == QTarget::ddqn;
  const auto* oc = online_cache_valid_ ? &online_cache_ : nullptr;
  auto tp = target_.start(traj.user);
  auto op = double_q ? online_.start(traj.user) : SequenceNet::Prefix{};
  std::vector<double> y(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& s = traj.steps[t];
    const double r = data::reward_of(s.behavior, space_);
    if (t + 1 == T) {
      y[t] = r;
      break;
    }
    target_.advance(tp, s.action, s.behavior, &target_cache_);
    const auto& next = traj.candidates[t + 1];
    if (double_q) {
      online_.advance(op, s.action, s.behavior, oc);
      y[t] = ddqn_target(online_, op, target_, tp, next, config_.gamma, r, oc, &target_cache_);
    } else {
      y[t] = dqn_target(target_, tp, next, config_.gamma, r, &target_cache_);
    }
  }
  return y;
}

double QLearner::loss(const data::Trajectory& traj) const {
  const auto y = targets(traj);
  const auto q = online_.forward(traj);
  double total = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) total += nn::mse_loss(q[t][0], y[t]);
  return total / static_cast<double>(y.size());
}

double QLearner::accumulate(const data::Trajectory& traj) {
  const auto y = targets(traj);
  SequenceNet::Tape tape;
  const auto q = online_.forward(traj, &tape);
  const double inv_t = 1.0 / static_cast<double>(y.size());
  std::vector<nn::Vector> d(y.size(), nn::Vector(1));
  double total = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    total += nn::mse_loss(q[t][0], y[t]);
    d[t][0] = nn::mse_grad(q[t][0], y[t]) * inv_t;
  }
  online_.backward(tape, d);
  return total * inv_t;
}

double QLearner::update(std::span<const data::Trajectory* const> batch) {
  if (batch.empty()) throw std::invalid_argument("Q update: empty batch");
  refresh_caches();
  online_.params().zero_grad();
  double total = 0.0;
  for (const auto* traj : batch) total += accumulate(*traj);
  online_.params().scale_grad(1.0 / static_cast<double>(batch.size()));
  nn::adam_update(online_.params(), adam_, config_.adam);
  online_cache_valid_ = false;
  ++updates_;
  if (updates_ % config_.target_sync == 0) sync_target();
  return total / static_cast<double>(batch.size());
}

QTrainResult train_q(const data::Dataset& dataset, const QConfig& config, const SequenceNet* init) {
  if (dataset.empty()) throw std::invalid_argument("train_q: empty dataset");
  if (config.batch_size <= 0 || config.epochs < 0) throw std::invalid_argument("train_q: bad options");
  QLearner learner(config, dataset.space);
  if (init) {
    learner.online().params().copy_values_from(init->params());
    learner.sync_target();
  } else if (config.center_output) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& t : dataset.trajectories) {
      const auto y = config.target == QTarget::mcpe ? mcpe_targets(t, dataset.space, config.reward_to_go)
                                                    : discounted_returns(t, dataset.space, config.gamma);
      for (double v : y) sum += v;
      count += y.size();
    }
    learner.online().set_output_bias(nn::Vector::Constant(1, sum / static_cast<double>(count)));
    learner.sync_target();
  }
  nn::Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t all = dataset.size();
  const std::size_t n = config.epoch_samples == 0 ? all : std::min(all, config.epoch_samples);
  std::vector<std::size_t> order(all);
  std::vector<const data::Trajectory*> batch;
  std::vector<double> curve;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) batch.push_back(&dataset.trajectories[order[k]]);
      total += learner.update(batch) * static_cast<double>(batch.size());
    }
    curve.push_back(total / static_cast<double>(n));
  }
  return {learner.online(), std::move(curve), learner.updates()};
}

double q_objective_mse(const SequenceNet& net, const data::Dataset& dataset, const QConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("q_objective_mse: empty dataset");
  QConfig c = config;
  c.encoder = net.config();
  QLearner learner(c, dataset.space);
  learner.online().params().copy_values_from(net.params());
  learner.sync_target();
  double total = 0.0;
  for (const auto& traj : dataset.trajectories) total += learner.loss(traj);
  return total / static_cast<double>(dataset.size());
}

class QSession final : public PolicySession {
 public:
  QSession(const QPolicy& p, int user) : p_(p), prefix_(p.net_->start(user)) {}

  std::vector<double> score(std::span<const int> candidates) override {
    const auto q = p_.net_->outputs(prefix_, candidates, &p_.cache_);
    std::vector<double> out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i][0];
    return out;
  }
  void observe(int action, int behavior) override { p_.net_->advance(prefix_, action, behavior, &p_.cache_); }

 private:
  const QPolicy& p_;
  SequenceNet::Prefix prefix_;
};

QPolicy::QPolicy(std::shared_ptr<const SequenceNet> net, std::string name)
    : net_(std::move(net)), name_(std::move(name)) {
  if (!net_ || net_->output_size() != 1) throw std::invalid_argument("QPolicy needs a scalar-output network");
  cache_ = net_->build_cache();
}

std::unique_ptr<PolicySession> QPolicy::begin(int user) const {
  net_->check_user(user);
  return std::make_unique<QSession>(*this, user);
}

}  // namespace mbcal::agents
