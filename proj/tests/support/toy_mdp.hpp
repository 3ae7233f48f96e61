#pragma once

// Fully enumerable deterministic MDP: 2 users, 3 items, 2 steps, every item
// offered at every step. Behaviors 0..2 with rewards 0..2.

#include <algorithm>
#include <array>
#include <string>

#include "mbcal/data/trajectory.hpp"

namespace mbcal::testing {

struct ToyMdp {
  static constexpr int users = 2;
  static constexpr int items = 3;
  static constexpr int horizon = 2;

  static int first_behavior(int u, int a) {
    static constexpr int table[2][3] = {{2, 1, 0}, {0, 2, 1}};
    return table[u][a];
  }
  static int second_behavior(int u, int a0, int a1) { return (a0 + 2 * a1 + u) % 3; }

  static data::BehaviorSpace space() { return data::BehaviorSpace({0.0, 1.0, 2.0}); }

  /// All 18 sessions.
  static data::Dataset dataset() {
    data::Dataset ds{space(), horizon, {}};
    for (int u = 0; u < users; ++u) {
      for (int a0 = 0; a0 < items; ++a0) {
        for (int a1 = 0; a1 < items; ++a1) {
          data::Trajectory t;
          t.id = "toy-" + std::to_string(u) + std::to_string(a0) + std::to_string(a1);
          t.user = u;
          t.steps = {{a0, first_behavior(u, a0), false}, {a1, second_behavior(u, a0, a1), false}};
          t.candidates = {{0, 1, 2}, {0, 1, 2}};
          ds.trajectories.push_back(t);
        }
      }
    }
    return ds;
  }

  /// Exact optimal action values by backward induction.
  static double q_last(int u, int a0, int a1) { return second_behavior(u, a0, a1); }
  static double q_first(int u, int a0, double gamma) {
    double best = q_last(u, a0, 0);
    for (int a1 = 1; a1 < items; ++a1) best = std::max(best, q_last(u, a0, a1));
    return first_behavior(u, a0) + gamma * best;
  }
};

}  // namespace mbcal::testing
