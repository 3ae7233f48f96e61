#include "mbcal/data/trajectory.hpp"

#include <algorithm>
#include <stdexcept>

#include "mbcal/error.hpp"

namespace mbcal::data {

BehaviorSpace::BehaviorSpace(std::vector<double> rewards) : rewards_(std::move(rewards)) {
  if (rewards_.size() < 2) throw std::invalid_argument("behavior space needs at least two behaviors");
}

BehaviorSpace BehaviorSpace::ratings() { return BehaviorSpace({0, 1, 2, 3, 4, 5}); }

BehaviorSpace BehaviorSpace::dwell_levels() {
  std::vector<double> r(12);
  for (int i = 0; i < 12; ++i) r[i] = i + 1;
  return BehaviorSpace(std::move(r));
}

double BehaviorSpace::min_reward() const { return *std::min_element(rewards_.begin(), rewards_.end()); }
double BehaviorSpace::max_reward() const { return *std::max_element(rewards_.begin(), rewards_.end()); }

double reward_of(int behavior, const BehaviorSpace& space) {
  if (behavior < 0 || behavior >= space.size()) {
    throw IndexError("behavior " + std::to_string(behavior) + " outside behavior space of size " +
                     std::to_string(space.size()));
  }
  return space.rewards()[static_cast<std::size_t>(behavior)];
}

double Trajectory::total_reward(const BehaviorSpace& space) const {
  double s = 0.0;
  for (const auto& st : steps) s += reward_of(st.behavior, space);
  return s;
}

void Dataset::validate() const {
  for (const auto& t : trajectories) {
    if (t.horizon() != horizon) {
      throw FormatError("trajectory '" + t.id + "' has " + std::to_string(t.horizon()) +
                        " steps, expected " + std::to_string(horizon));
    }
    if (!t.candidates.empty() && static_cast<int>(t.candidates.size()) != horizon) {
      throw FormatError("trajectory '" + t.id + "' has candidate sets for only some steps");
    }
    for (const auto& s : t.steps) {
      if (s.behavior < 0 || s.behavior >= space.size()) {
        throw FormatError("trajectory '" + t.id + "' has invalid behavior " + std::to_string(s.behavior));
      }
      if (s.action < 0) throw FormatError("trajectory '" + t.id + "' has negative item id");
    }
  }
}

std::vector<int> mask_positions(const Trajectory& traj, double p_mask, Rng& rng) {
  if (!(p_mask >= 0.0 && p_mask <= 1.0)) throw std::invalid_argument("p_mask must lie in [0, 1]");
  std::vector<int> out;
  std::bernoulli_distribution coin(p_mask);
  for (int t = 0; t < traj.horizon(); ++t) {
    if (coin(rng)) out.push_back(t);
  }
  return out;
}

Trajectory apply_mask(const Trajectory& traj, const std::vector<int>& positions) {
  Trajectory out = traj;
  for (int t : positions) {
    if (t < 0 || t >= traj.horizon()) {
      throw IndexError("mask position " + std::to_string(t) + " outside trajectory of length " +
                       std::to_string(traj.horizon()));
    }
    out.steps[static_cast<std::size_t>(t)].masked = true;
  }
  return out;
}

}  // namespace mbcal::data
