#include "mbcal/agents/policy.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "mbcal/error.hpp"

namespace mbcal::agents {

std::size_t greedy_select(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("greedy_select: empty candidate set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::size_t epsilon_greedy(std::size_t greedy, std::size_t count, double epsilon, nn::Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (count == 0) throw std::invalid_argument("epsilon_greedy: empty candidate set");
  if (epsilon == 0.0) return greedy;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, count - 1);
    return pick(rng);
  }
  return greedy;
}

int act(PolicySession& session, std::span<const int> candidates, nn::Rng& rng, double epsilon) {
  if (candidates.empty()) throw std::invalid_argument("act: empty candidate set");
  if (session.uniform()) return candidates[epsilon_greedy(0, candidates.size(), 1.0, rng)];
  const auto scores = session.score(candidates);
  if (scores.size() != candidates.size()) throw ShapeError("policy returned the wrong number of scores");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NonFiniteError("policy produced a non-finite score");
  }
  return candidates[epsilon_greedy(greedy_select(scores), candidates.size(), epsilon, rng)];
}

std::vector<double> score_after(const Policy& policy, int user, std::span<const data::Step> prefix,
                                std::span<const int> candidates) {
  auto session = policy.begin(user);
  for (const auto& s : prefix) session->observe(s.action, s.behavior);
  return session->score(candidates);
}

namespace {

class RandomSession final : public PolicySession {
 public:
  std::vector<double> score(std::span<const int> candidates) override {
    return std::vector<double>(candidates.size(), 0.0);
  }
  void observe(int, int) override {}
  bool uniform() const override { return true; }
};

}  // namespace

std::unique_ptr<PolicySession> RandomPolicy::begin(int) const { return std::make_unique<RandomSession>(); }

}  // namespace mbcal::agents
