#include "mbcal/agents/mbcal_policy.hpp"

#include <stdexcept>

namespace mbcal::agents {

class MbcalSession final : public PolicySession {
 public:
  MbcalSession(const MbcalPolicy& p, int user) : p_(p) {
    mem_prefix_ = p_.mem_->net().start(user);
    if (p_.fam_) fam_prefix_ = p_.fam_->net().start(user);
  }

  std::vector<double> score(std::span<const int> candidates) override {
    const auto& mem = *p_.mem_;
    const auto logits = mem.net().outputs(mem_prefix_, candidates, &p_.mem_cache_);
    std::vector<double> scores(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      scores[i] = mem.expected_reward(nn::softmax(logits[i]));
    }
    if (p_.fam_) {
      const auto g = p_.fam_->net().outputs(fam_prefix_, candidates, &p_.fam_cache_);
      for (std::size_t i = 0; i < candidates.size(); ++i) scores[i] = mbcal_score(scores[i], g[i][0]);
    }
    return scores;
  }

  void observe(int action, int behavior) override {
    p_.mem_->net().advance(mem_prefix_, action, behavior, &p_.mem_cache_);
    if (p_.fam_) p_.fam_->net().advance(fam_prefix_, action, behavior, &p_.fam_cache_);
  }

 private:
  const MbcalPolicy& p_;
  model::SequenceNet::Prefix mem_prefix_;
  model::SequenceNet::Prefix fam_prefix_;
};

MbcalPolicy::MbcalPolicy(std::shared_ptr<const model::Mem> mem, std::shared_ptr<const model::Fam> fam,
                         std::string name)
    : mem_(std::move(mem)), fam_(std::move(fam)), name_(std::move(name)) {
  if (!mem_) throw std::invalid_argument("MbcalPolicy needs a MEM");
  mem_cache_ = mem_->net().build_cache();
  if (fam_) fam_cache_ = fam_->net().build_cache();
}

std::unique_ptr<PolicySession> MbcalPolicy::begin(int user) const {
  mem_->net().check_user(user);
  return std::make_unique<MbcalSession>(*this, user);
}

}  // namespace mbcal::agents
