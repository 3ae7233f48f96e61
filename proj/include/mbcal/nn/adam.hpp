#pragma once

#include <cstdint>
#include <vector>

#include "mbcal/nn/params.hpp"

namespace mbcal::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment accumulators shaped like the parameter set they serve.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(const ParamSet& params);
};

/// One bias-corrected Adam step using the gradients stored in `params`.
/// A non-finite gradient aborts the update before anything is modified.
void adam_update(ParamSet& params, AdamState& state, const AdamConfig& config);

}  // namespace mbcal::nn
