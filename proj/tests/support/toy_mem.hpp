#pragma once

// Hand-set MEMs whose outputs have closed forms, used as oracles.

#include <cmath>
#include <vector>

#include "mbcal/model/mem.hpp"

namespace mbcal::testing {

/// Scalar recurrent MEM over two behaviors with rewards {0, 4}.
///
///   h_t = tanh(alpha * e(a_t) + beta * h_{t-1}),   h_{-1} = 0
///   P(behavior 1) = sigmoid(w * h_t),  r_hat_t = 4 * sigmoid(w * h_t)
///
/// `item_values` gives e(item) for each catalog item followed by the mask item.
struct ToyMem {
  double alpha = 1.0;
  double beta = 0.0;
  double w = 2.0;
  std::vector<double> item_values;

  model::Mem build() const {
    model::EncoderConfig enc;
    enc.num_users = 1;
    enc.num_items = static_cast<int>(item_values.size()) - 1;
    enc.num_behaviors = 2;
    enc.embed_size = 1;
    enc.hidden_size = 1;
    enc.mlp_hidden = 0;
    enc.user_embedding = false;
    model::Mem mem(enc, data::BehaviorSpace({0.0, 4.0}), 1);
    auto& p = mem.net().params();
    for (auto& b : p) b.value.setZero();
    auto& items = p.find("item_emb")->value;
    for (std::size_t i = 0; i < item_values.size(); ++i) items(static_cast<Eigen::Index>(i), 0) = item_values[i];
    auto& wx = p.find("gru.w_input")->value;  // rows z, r, c; cols [behavior, item]
    wx(2, 1) = alpha;
    p.find("gru.w_hidden")->value(2, 0) = beta;
    auto& bias = p.find("gru.bias")->value;
    bias(0, 0) = 40.0;  // z and r saturate to exactly 1.0 in double precision
    bias(1, 0) = 40.0;
    p.find("head.0.weight")->value(1, 0) = w;
    return mem;
  }

  /// Independent evaluation of r_hat at every step for an item sequence.
  std::vector<double> rewards(const std::vector<int>& items) const {
    std::vector<double> out;
    double h = 0.0;
    for (int a : items) {
      h = std::tanh(alpha * item_values[static_cast<std::size_t>(a)] + beta * h);
      out.push_back(4.0 / (1.0 + std::exp(-w * h)));
    }
    return out;
  }
};

}  // namespace mbcal::testing
