#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mbcal/data/trajectory.hpp"
#include "mbcal/model/sequence_net.hpp"

namespace mbcal::model {

struct MemConfig {
  EncoderConfig encoder;
  double p_mask = 0.2;
  /// Draw fresh mask positions every epoch; off masks each trajectory once.
  bool resample_masks = true;
  int epochs = 4;
  int batch_size = 32;
  std::size_t epoch_samples = 0;
  nn::AdamConfig adam;
  std::uint64_t seed = 1;
};

/// Masked environment model: a behavior classifier over the next step that
/// doubles as the learned reward function.
class Mem {
 public:
  Mem(const EncoderConfig& encoder, data::BehaviorSpace space, std::uint64_t seed);

  SequenceNet& net() noexcept { return net_; }
  const SequenceNet& net() const noexcept { return net_; }
  const data::BehaviorSpace& space() const noexcept { return space_; }
  int mask_item() const noexcept { return net_.mask_item(); }

  /// Behavior distribution for `action` (or mask_item()) after `prefix`.
  Vector distribution(int user, std::span<const data::Step> prefix, int action) const;
  double expected_reward(int user, std::span<const data::Step> prefix, int action) const;
  /// sum_n R_n * p_n
  double expected_reward(const Vector& distribution) const;

  /// Mean per-step NLL of a trajectory (masked flags honored).
  double loss(const data::Trajectory& traj, nn::LossStats* stats = nullptr) const;
  /// Adds the gradient of loss(traj) into net().params(); returns the loss.
  double accumulate_gradient(const data::Trajectory& traj, nn::LossStats* stats = nullptr);

 private:
  data::BehaviorSpace space_;
  SequenceNet net_;
};

struct MemTrainResult {
  Mem model;
  std::vector<double> loss_curve;
  std::size_t clamped_probabilities = 0;
};

/// Fits a MEM on randomly masked copies of `dataset`. With p_mask = 0 this is
/// a plain next-behavior sequence model. `init` warm-starts from existing
/// parameters of the same shape.
MemTrainResult train_mem(const data::Dataset& dataset, const MemConfig& config, const Mem* init = nullptr);

struct MemEvaluation {
  double nll = 0.0;
  double accuracy = 0.0;
  std::vector<double> f1;  // per behavior class, argmax predictions
  double macro_f1 = 0.0;
};

MemEvaluation evaluate_mem(const Mem& mem, const data::Dataset& dataset);

}  // namespace mbcal::model
