#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mbcal/data/trajectory.hpp"
#include "mbcal/nn/adam.hpp"
#include "mbcal/nn/layers.hpp"
#include "mbcal/nn/params.hpp"

namespace mbcal::model {

using nn::Vector;

struct EncoderConfig {
  int num_users = 1;
  int num_items = 1;
  int num_behaviors = 2;
  int embed_size = 32;
  int hidden_size = 32;
  /// Width of the MLP hidden layer; 0 makes the head a single affine map.
  int mlp_hidden = 32;
  /// h_0 = Emb(user) when on, zeros otherwise.
  bool user_embedding = true;
};

/// GRU encoder over staggered (previous behavior, current action) inputs
/// followed by an MLP head:
///
///   h_0 = Emb(u)
///   x_t = [Emb(b_{t-1}); Emb(a_t)]     (b_{-1} is the start token)
///   h_t = GRU(h_{t-1}, x_t)
///   y_t = MLP(h_t)
///
/// y_t conditions on the prefix of steps before t and on the action at t.
/// The behavior table has one extra row for the start token, the item table
/// one extra row for the mask item.
class SequenceNet {
 public:
  SequenceNet(const EncoderConfig& config, int output_size, std::uint64_t seed);

  const EncoderConfig& config() const noexcept { return config_; }
  int output_size() const noexcept { return output_size_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }

  int mask_item() const noexcept { return config_.num_items; }
  int start_behavior() const noexcept { return config_.num_behaviors; }
  /// Item id fed to the model for a logged step.
  int input_item(const data::Step& s) const noexcept { return s.masked ? mask_item() : s.action; }

  /// Precomputed input projections of every item and behavior row. Valid only
  /// for the parameter values it was built from; results with and without a
  /// cache are bit-identical.
  struct InferenceCache {
    std::vector<Vector> item_proj;
    std::vector<Vector> behavior_proj;
  };
  InferenceCache build_cache() const;

  /// Encoder state after a prefix of observed steps.
  struct Prefix {
    Vector h;
    int prev_behavior = 0;
    int length = 0;
  };
  Prefix start(int user) const;
  /// Head output for `action` at the next position; does not advance.
  Vector output(const Prefix& prefix, int action, const InferenceCache* cache = nullptr) const;
  /// Head outputs for several candidate actions sharing one prefix.
  std::vector<Vector> outputs(const Prefix& prefix, std::span<const int> actions,
                              const InferenceCache* cache = nullptr) const;
  /// Appends an observed step; returns the head output the step produced.
  Vector advance(Prefix& prefix, int action, int behavior, const InferenceCache* cache = nullptr) const;
  /// Replays `steps` (masked flags honored) from a fresh prefix for `user`.
  Prefix encode(int user, std::span<const data::Step> steps, const InferenceCache* cache = nullptr) const;

  /// Recorded forward pass for backpropagation through time.
  struct Tape {
    struct StepRecord {
      int behavior_in = 0;
      int item_in = 0;
      Vector behavior_emb, item_emb;
      nn::Gru::Cache gru;
      nn::Mlp::Cache head;
    };
    int user = 0;
    std::vector<StepRecord> steps;
    bool valid = false;
  };
  /// Per-step head outputs for a whole trajectory.
  std::vector<Vector> forward(const data::Trajectory& traj, Tape* tape = nullptr) const;
  /// Accumulates parameter gradients for dL/dy_t given per step.
  void backward(const Tape& tape, std::span<const Vector> d_outputs);

  /// Overwrites the bias of the head's output layer.
  void set_output_bias(const Vector& bias);

  void check_item(int item) const;
  void check_user(int user) const;

 private:
  Vector behavior_projection(int behavior, const InferenceCache* cache) const;
  Vector item_projection(int item, const InferenceCache* cache) const;
  Vector step_hidden(const Prefix& prefix, int action, const Vector* rec_zr,
                     const InferenceCache* cache) const;

  EncoderConfig config_;
  int output_size_ = 0;
  nn::ParamSet params_;
  nn::Embedding user_emb_;
  nn::Embedding behavior_emb_;
  nn::Embedding item_emb_;
  nn::Gru gru_;
  nn::Mlp head_;
};

/// Expected parameter count for a configuration (embedding tables, GRU, head).
std::size_t parameter_count(const EncoderConfig& config, int output_size);

struct FitOptions {
  int epochs = 1;
  int batch_size = 32;
  /// Examples drawn (without replacement) per epoch; 0 uses all of them.
  std::size_t epoch_samples = 0;
  nn::AdamConfig adam;
};

struct FitHooks {
  std::function<void(int)> before_epoch;
  std::function<void()> before_batch;
  std::function<void()> after_update;
};

/// Runs mini-batch Adam over `num_examples` items in shuffled order.
/// `accumulate(i, net)` must add the gradient of example i's loss into
/// net.params() and return that loss; batch gradients are averaged.
/// Returns the mean loss of each epoch.
std::vector<double> fit(SequenceNet& net, std::size_t num_examples, const FitOptions& options,
                        nn::Rng& shuffle_rng,
                        const std::function<double(std::size_t, SequenceNet&)>& accumulate,
                        const FitHooks& hooks = {});

}  // namespace mbcal::model
