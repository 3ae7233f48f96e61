#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mbcal::data {

using Rng = std::mt19937_64;

/// Discrete user-feedback categories and their scalar utilities.
class BehaviorSpace {
 public:
  BehaviorSpace() = default;
  /// Throws unless rewards.size() >= 2.
  explicit BehaviorSpace(std::vector<double> rewards);

  /// Six rating levels with rewards 0..5.
  static BehaviorSpace ratings();
  /// Twelve dwell-time levels with rewards 1..12.
  static BehaviorSpace dwell_levels();

  int size() const noexcept { return static_cast<int>(rewards_.size()); }
  const std::vector<double>& rewards() const noexcept { return rewards_; }
  double min_reward() const;
  double max_reward() const;

  friend bool operator==(const BehaviorSpace&, const BehaviorSpace&) = default;

 private:
  std::vector<double> rewards_;
};

/// Reward of a behavior index; throws IndexError when out of range.
double reward_of(int behavior, const BehaviorSpace& space);

struct Step {
  int action = 0;
  int behavior = 0;
  /// Model input uses the mask item instead of `action`; `action` is kept.
  bool masked = false;

  friend bool operator==(const Step&, const Step&) = default;
};

/// One session. Provenance (`policy`, `round`) travels with each trajectory so
/// pooled datasets stay auditable.
struct Trajectory {
  std::string id;
  int user = 0;
  std::vector<Step> steps;
  /// Per-step candidate sets; empty for logs that did not record them.
  std::vector<std::vector<int>> candidates;
  std::string policy;
  int round = 0;

  int horizon() const noexcept { return static_cast<int>(steps.size()); }
  double total_reward(const BehaviorSpace& space) const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Dataset {
  BehaviorSpace space;
  int horizon = 0;
  std::vector<Trajectory> trajectories;

  bool empty() const noexcept { return trajectories.empty(); }
  std::size_t size() const noexcept { return trajectories.size(); }
  /// Throws if any trajectory has the wrong length or an invalid behavior.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Zero-based step indices, each included independently with probability p_mask.
std::vector<int> mask_positions(const Trajectory& traj, double p_mask, Rng& rng);

/// Copy of `traj` with `masked` set at exactly `positions` (zero-based).
/// Positions already masked in `traj` stay masked.
Trajectory apply_mask(const Trajectory& traj, const std::vector<int>& positions);

}  // namespace mbcal::data
