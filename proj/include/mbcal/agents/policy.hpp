#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mbcal/data/trajectory.hpp"
#include "mbcal/nn/params.hpp"

namespace mbcal::agents {

/// Per-session policy state; keeps the encoded prefix so each step costs one
/// recurrent update instead of a replay.
class PolicySession {
 public:
  virtual ~PolicySession() = default;
  /// One score per candidate, higher is better.
  virtual std::vector<double> score(std::span<const int> candidates) = 0;
  virtual void observe(int action, int behavior) = 0;
  /// Uniform-random policies ignore scores entirely.
  virtual bool uniform() const { return false; }
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<PolicySession> begin(int user) const = 0;
};

/// Index of the largest score; ties go to the lowest index.
std::size_t greedy_select(std::span<const double> scores);

/// With probability epsilon a uniform random index into `count` candidates,
/// otherwise `greedy`. Draws from `rng` only when 0 < epsilon.
std::size_t epsilon_greedy(std::size_t greedy, std::size_t count, double epsilon, nn::Rng& rng);

/// Chooses an item from `candidates`: greedy on the session's scores, with
/// epsilon-greedy exploration when epsilon > 0.
int act(PolicySession& session, std::span<const int> candidates, nn::Rng& rng, double epsilon);

/// Scores candidates after replaying a logged prefix from a fresh session.
std::vector<double> score_after(const Policy& policy, int user, std::span<const data::Step> prefix,
                                std::span<const int> candidates);

class RandomPolicy final : public Policy {
 public:
  std::string name() const override { return "random"; }
  std::unique_ptr<PolicySession> begin(int user) const override;
};

}  // namespace mbcal::agents
