#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mbcal/agents/policy.hpp"
#include "mbcal/data/trajectory.hpp"
#include "mbcal/model/sequence_net.hpp"
#include "mbcal/nn/adam.hpp"

namespace mbcal::agents {

enum class QTarget {
  dqn,   ///< r + gamma * max_a' Q'(next, a')
  ddqn,  ///< r + gamma * Q'(next, argmax_a' Q(next, a'))
  mcpe,  ///< undiscounted Monte Carlo return
};

std::string to_string(QTarget t);

struct QConfig {
  model::EncoderConfig encoder;
  QTarget target = QTarget::dqn;
  /// MCPE only: regress onto the return from t instead of the whole session.
  bool reward_to_go = false;
  double gamma = 0.95;
  int epochs = 4;
  int batch_size = 32;
  /// Trajectories drawn per epoch; 0 uses the whole dataset.
  std::size_t epoch_samples = 0;
  /// Start the output bias at the mean Monte Carlo target (MCPE) or mean
  /// discounted return-to-go (DQN/DDQN) of the dataset, fresh models only.
  bool center_output = false;
  /// Copy online parameters into the target network every this many updates.
  int target_sync = 100;
  nn::AdamConfig adam;
  std::uint64_t seed = 3;
};

/// Monte Carlo targets: sum of all rewards of the session at every step, or
/// the reward-to-go from each step.
std::vector<double> mcpe_targets(const data::Trajectory& traj, const data::BehaviorSpace& space,
                                 bool reward_to_go);

/// sum_k gamma^k r_{t+k} at every step t.
std::vector<double> discounted_returns(const data::Trajectory& traj, const data::BehaviorSpace& space,
                                       double gamma);

/// max_{a' in candidates} Q_target(prefix, a'), bootstrapped into r + gamma * that.
double dqn_target(const model::SequenceNet& target, const model::SequenceNet::Prefix& next,
                  std::span<const int> next_candidates, double gamma, double reward,
                  const model::SequenceNet::InferenceCache* cache = nullptr);

/// r + gamma * Q_target(next, argmax_{a'} Q_online(next, a')).
double ddqn_target(const model::SequenceNet& online, const model::SequenceNet::Prefix& online_next,
                   const model::SequenceNet& target, const model::SequenceNet::Prefix& target_next,
                   std::span<const int> next_candidates, double gamma, double reward,
                   const model::SequenceNet::InferenceCache* online_cache = nullptr,
                   const model::SequenceNet::InferenceCache* target_cache = nullptr);

/// Online Q network, its target copy and optimizer state.
class QLearner {
 public:
  QLearner(const QConfig& config, const data::BehaviorSpace& space);

  const QConfig& config() const noexcept { return config_; }
  model::SequenceNet& online() noexcept { return online_; }
  const model::SequenceNet& online() const noexcept { return online_; }
  const model::SequenceNet& target() const noexcept { return target_; }
  long updates() const noexcept { return updates_; }

  void sync_target();

  /// Regression target at every step of `traj` under the current networks.
  /// The last step's target is its reward alone.
  std::vector<double> targets(const data::Trajectory& traj) const;

  /// Mean over steps of (Q(prefix_t, a_t) - target_t)^2.
  double loss(const data::Trajectory& traj) const;

  /// One Adam step on the mean per-trajectory loss of `batch`; syncs the
  /// target network every target_sync updates. Returns the batch loss.
  double update(std::span<const data::Trajectory* const> batch);

 private:
  double accumulate(const data::Trajectory& traj);
  void refresh_caches();

  QConfig config_;
  data::BehaviorSpace space_;
  model::SequenceNet online_;
  model::SequenceNet target_;
  nn::AdamState adam_;
  long updates_ = 0;
  model::SequenceNet::InferenceCache target_cache_;
  model::SequenceNet::InferenceCache online_cache_;
  bool online_cache_valid_ = false;
};

struct QTrainResult {
  model::SequenceNet net;
  std::vector<double> loss_curve;
  long updates = 0;
};

QTrainResult train_q(const data::Dataset& dataset, const QConfig& config,
                     const model::SequenceNet* init = nullptr);

/// Mean objective of a trained Q network on `dataset`, with the target
/// network equal to `net`.
double q_objective_mse(const model::SequenceNet& net, const data::Dataset& dataset, const QConfig& config);

/// Greedy on Q values.
class QPolicy final : public Policy {
 public:
  QPolicy(std::shared_ptr<const model::SequenceNet> net, std::string name);
  std::string name() const override { return name_; }
  std::unique_ptr<PolicySession> begin(int user) const override;

 private:
  friend class QSession;
  std::shared_ptr<const model::SequenceNet> net_;
  std::string name_;
  model::SequenceNet::InferenceCache cache_;
};

}  // namespace mbcal::agents
