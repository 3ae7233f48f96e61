#pragma once

#include <memory>
#include <string>

#include "mbcal/agents/policy.hpp"
#include "mbcal/model/fam.hpp"
#include "mbcal/model/mem.hpp"

namespace mbcal::agents {

/// Scores a candidate by the MEM's expected instant reward plus the FAM's
/// future advantage. Without a FAM this is the GRU4Rec-style myopic policy.
class MbcalPolicy final : public Policy {
 public:
  MbcalPolicy(std::shared_ptr<const model::Mem> mem, std::shared_ptr<const model::Fam> fam,
              std::string name = "mbcal");

  std::string name() const override { return name_; }
  std::unique_ptr<PolicySession> begin(int user) const override;

  const model::Mem& mem() const { return *mem_; }
  const model::Fam* fam() const { return fam_.get(); }

 private:
  friend class MbcalSession;
  std::shared_ptr<const model::Mem> mem_;
  std::shared_ptr<const model::Fam> fam_;
  std::string name_;
  model::SequenceNet::InferenceCache mem_cache_;
  model::SequenceNet::InferenceCache fam_cache_;
};

/// r_hat + g
inline double mbcal_score(double expected_reward, double future_advantage) {
  return expected_reward + future_advantage;
}

}  // namespace mbcal::agents
