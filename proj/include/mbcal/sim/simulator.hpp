#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "mbcal/agents/policy.hpp"
#include "mbcal/data/trajectory.hpp"
#include "mbcal/nn/layers.hpp"
#include "mbcal/nn/params.hpp"

namespace mbcal::sim {

using nn::Matrix;
using nn::Vector;

/// Synthetic user environment. Behaviors are treated as ordered by index
/// (index 0 the most negative feedback).
///
/// Each user carries an LSTM state driven by the latent features of the items
/// shown. Per step the user's satisfaction is
///
///   s = pref * <u, f_tail> + appeal * f[0] + engagement * h_prev[0]
///       + readout . h[1:] - recency * [item shown recently]
///
/// where unit 0 of the LSTM is a slow engagement memory that rises with item
/// depth f[1] and falls with appeal f[0]. The behavior is drawn from
///
///   softmax(logits / temperature + bias_u * (n - c)),
///   logits_n = sharpness * (n - c) * s - curvature * (n - c)^2
///
/// with c the middle behavior index and bias_u a per-user offset.
struct SimConfig {
  int num_items = 200;
  int num_users = 500;
  int feature_size = 8;
  int hidden_size = 16;
  int candidates = 10;
  int horizon = 20;
  data::BehaviorSpace space = data::BehaviorSpace::ratings();

  double temperature = 1.0;
  double user_bias_spread = 0.5;
  double recency_penalty = 0.5;
  int recency_window = 5;

  double preference_weight = 1.0;
  double appeal_weight = 0.6;
  double engagement_weight = 1.5;
  double engagement_input = 0.6;
  double engagement_decay = 0.9;
  double readout_weight = 0.3;
  double sharpness = 1.0;
  double curvature = 0.15;

  std::uint64_t seed = 7;

  void validate() const;
};

/// Latent item features; visible to the simulator only.
struct ItemCatalog {
  Matrix features;  // feature_size x num_items
  int size() const noexcept { return static_cast<int>(features.cols()); }
};

struct User {
  Vector preference;  // feature_size - 2
  double bias = 0.0;
};

struct Session {
  int user = 0;
  int step = 0;
  nn::Lstm::State state;
  std::deque<int> recent;
  std::vector<int> candidates;
  bool candidates_drawn = false;
  nn::Rng candidate_rng;
  nn::Rng behavior_rng;
};

struct StepResult {
  int behavior = 0;
  double reward = 0.0;
};

/// Samples from softmax(logits / temperature + bias * (n - c)); temperature 0
/// returns the argmax of the logits (lowest index on ties).
int sample_behavior(const Vector& logits, double temperature, double bias, nn::Rng& rng);

class Simulator {
 public:
  explicit Simulator(const SimConfig& config);

  const SimConfig& config() const noexcept { return config_; }
  const data::BehaviorSpace& space() const noexcept { return config_.space; }
  int num_items() const noexcept { return config_.num_items; }
  int num_users() const noexcept { return config_.num_users; }
  int horizon() const noexcept { return config_.horizon; }

  const ItemCatalog& catalog() const noexcept { return catalog_; }
  const std::vector<User>& users() const noexcept { return users_; }
  const nn::ParamSet& params() const noexcept { return params_; }

  /// New session for a user drawn from `session_seed`'s stream.
  Session begin(std::uint64_t session_seed) const;
  Session begin(int user, std::uint64_t session_seed) const;

  /// The k distinct candidates for the session's current step; drawn once per step.
  const std::vector<int>& candidate_set(Session& session) const;

  StepResult step(Session& session, int action) const;

  /// Behavior logits (before temperature and user bias) if `action` were shown now.
  Vector logits(const Session& session, int action) const;
  /// Exact behavior distribution and expected reward of showing `action` now.
  Vector behavior_distribution(const Session& session, int action) const;
  double expected_reward(const Session& session, int action) const;

 private:
  double satisfaction(const Session& session, int action, const nn::Lstm::State& next) const;
  Vector ordinal_logits(double satisfaction) const;
  void check_action(const Session& session, int action) const;

  SimConfig config_;
  ItemCatalog catalog_;
  std::vector<User> users_;
  nn::ParamSet params_;
  nn::Lstm lstm_;
  Vector readout_;
};

/// One complete session: T alternations of candidate_set, act and step.
/// `epsilon` applies epsilon-greedy exploration with `explore_rng`.
data::Trajectory run_session(const Simulator& sim, const agents::Policy& policy,
                             std::uint64_t session_seed, nn::Rng& explore_rng, double epsilon);

}  // namespace mbcal::sim
