#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mbcal/model/cfa.hpp"
#include "mbcal/model/sequence_net.hpp"

namespace mbcal::model {

struct FamConfig {
  EncoderConfig encoder;
  int epochs = 4;
  int batch_size = 32;
  std::size_t epoch_samples = 0;
  /// Start the output bias at the mean label (fresh models only).
  bool center_output = false;
  nn::AdamConfig adam;
  std::uint64_t seed = 2;
};

/// Future advantage model: same encoder as the MEM with a scalar head.
class Fam {
 public:
  Fam(const EncoderConfig& encoder, std::uint64_t seed) : net_(encoder, 1, seed) {}

  SequenceNet& net() noexcept { return net_; }
  const SequenceNet& net() const noexcept { return net_; }

  double value(int user, std::span<const data::Step> prefix, int action) const;

  /// Mean over steps of (g(prefix_t, a_t) - label_t)^2.
  double loss(const data::Trajectory& traj, std::span<const double> labels) const;
  double accumulate_gradient(const data::Trajectory& traj, std::span<const double> labels);

 private:
  SequenceNet net_;
};

struct FamTrainResult {
  Fam model;
  std::vector<double> loss_curve;
};

/// Regresses the FAM onto `labels` over the unmasked trajectories of `dataset`.
FamTrainResult train_fam(const data::Dataset& dataset, const CfaLabelSet& labels, const FamConfig& config,
                         const Fam* init = nullptr);

/// Mean squared error of a FAM against a label set (per-trajectory means averaged).
double fam_mse(const Fam& fam, const data::Dataset& dataset, const CfaLabelSet& labels);

}  // namespace mbcal::model
