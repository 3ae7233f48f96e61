#include "mbcal/model/sequence_net.hpp"

#include <algorithm>
#include <numeric>

#include "mbcal/error.hpp"

namespace mbcal::model {

namespace {

std::vector<int> head_dims(const EncoderConfig& c, int output_size) {
  if (c.mlp_hidden > 0) return {c.hidden_size, c.mlp_hidden, output_size};
  return {c.hidden_size, output_size};
}

}  // namespace

SequenceNet::SequenceNet(const EncoderConfig& config, int output_size, std::uint64_t seed)
    : config_(config), output_size_(output_size) {
  if (config.num_users <= 0 || config.num_items <= 0 || config.num_behaviors < 2 ||
      config.embed_size <= 0 || config.hidden_size <= 0 || config.mlp_hidden < 0 || output_size <= 0) {
    throw std::invalid_argument("invalid sequence network configuration");
  }
  nn::Rng rng(seed);
  user_emb_ = nn::Embedding::create(params_, "user_emb", config.num_users, config.hidden_size, rng);
  behavior_emb_ =
      nn::Embedding::create(params_, "behavior_emb", config.num_behaviors + 1, config.embed_size, rng);
  item_emb_ = nn::Embedding::create(params_, "item_emb", config.num_items + 1, config.embed_size, rng);
  gru_ = nn::Gru::create(params_, "gru", 2 * config.embed_size, config.hidden_size, rng);
  head_ = nn::Mlp::create(params_, "head", head_dims(config, output_size), rng);
}

std::size_t parameter_count(const EncoderConfig& c, int output_size) {
  const std::size_t H = c.hidden_size, E = c.embed_size;
  std::size_t n = static_cast<std::size_t>(c.num_users) * H;
  n += static_cast<std::size_t>(c.num_behaviors + 1) * E;
  n += static_cast<std::size_t>(c.num_items + 1) * E;
  n += 3 * H * (2 * E) + 3 * H * H + 3 * H;
  const auto dims = head_dims(c, output_size);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    n += static_cast<std::size_t>(dims[i]) * dims[i + 1] + dims[i + 1];
  }
  return n;
}

void SequenceNet::check_item(int item) const {
  if (item < 0 || item > mask_item()) {
    throw IndexError("unknown item id " + std::to_string(item) + " (catalog has " +
                     std::to_string(config_.num_items) + " items)");
  }
}

void SequenceNet::check_user(int user) const {
  if (user < 0 || user >= config_.num_users) {
    throw IndexError("unknown user id " + std::to_string(user));
  }
}

Vector SequenceNet::behavior_projection(int behavior, const InferenceCache* cache) const {
  if (cache) return cache->behavior_proj.at(static_cast<std::size_t>(behavior));
  const Vector e = behavior_emb_.lookup(params_, behavior);
  return params_[gru_.w_input].value.leftCols(config_.embed_size) * e;
}

Vector SequenceNet::item_projection(int item, const InferenceCache* cache) const {
  check_item(item);
  if (cache) return cache->item_proj[static_cast<std::size_t>(item)];
  const Vector e = item_emb_.lookup(params_, item);
  return params_[gru_.w_input].value.rightCols(config_.embed_size) * e;
}

SequenceNet::InferenceCache SequenceNet::build_cache() const {
  InferenceCache c;
  c.item_proj.reserve(static_cast<std::size_t>(item_emb_.rows));
  for (int i = 0; i < item_emb_.rows; ++i) c.item_proj.push_back(item_projection(i, nullptr));
  c.behavior_proj.reserve(static_cast<std::size_t>(behavior_emb_.rows));
  for (int b = 0; b < behavior_emb_.rows; ++b) c.behavior_proj.push_back(behavior_projection(b, nullptr));
  return c;
}

SequenceNet::Prefix SequenceNet::start(int user) const {
  check_user(user);
  Prefix p;
  p.h = config_.user_embedding ? user_emb_.lookup(params_, user)
                               : Vector::Zero(config_.hidden_size).eval();
  p.prev_behavior = start_behavior();
  p.length = 0;
  return p;
}

Vector SequenceNet::step_hidden(const Prefix& prefix, int action, const Vector* rec_zr,
                                const InferenceCache* cache) const {
  const Vector proj = behavior_projection(prefix.prev_behavior, cache) + item_projection(action, cache);
  return gru_.step_projected(params_, prefix.h, proj, rec_zr);
}

Vector SequenceNet::output(const Prefix& prefix, int action, const InferenceCache* cache) const {
  return head_.forward(params_, step_hidden(prefix, action, nullptr, cache));
}

std::vector<Vector> SequenceNet::outputs(const Prefix& prefix, std::span<const int> actions,
                                         const InferenceCache* cache) const {
  const Vector rec_zr = gru_.recurrent_zr(params_, prefix.h);
  std::vector<Vector> out;
  out.reserve(actions.size());
  for (int a : actions) out.push_back(head_.forward(params_, step_hidden(prefix, a, &rec_zr, cache)));
  return out;
}

Vector SequenceNet::advance(Prefix& prefix, int action, int behavior, const InferenceCache* cache) const {
  if (behavior < 0 || behavior >= config_.num_behaviors) {
    throw IndexError("behavior " + std::to_string(behavior) + " out of range");
  }
  prefix.h = step_hidden(prefix, action, nullptr, cache);
  prefix.prev_behavior = behavior;
  ++prefix.length;
  return head_.forward(params_, prefix.h);
}

SequenceNet::Prefix SequenceNet::encode(int user, std::span<const data::Step> steps,
                                        const InferenceCache* cache) const {
  Prefix p = start(user);
  for (const auto& s : steps) {
    if (s.behavior < 0 || s.behavior >= config_.num_behaviors) {
      throw IndexError("behavior " + std::to_string(s.behavior) + " out of range");
    }
    p.h = step_hidden(p, input_item(s), nullptr, cache);
    p.prev_behavior = s.behavior;
    ++p.length;
  }
  return p;
}

std::vector<Vector> SequenceNet::forward(const data::Trajectory& traj, Tape* tape) const {
  Prefix p = start(traj.user);
  std::vector<Vector> out;
  out.reserve(traj.steps.size());
  if (tape) {
    tape->user = traj.user;
    tape->steps.clear();
    tape->steps.resize(traj.steps.size());
    tape->valid = false;
  }
  const auto& wx = params_[gru_.w_input].value;
  const int E = config_.embed_size;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& s = traj.steps[t];
    const int item = input_item(s);
    check_item(item);
    if (s.behavior < 0 || s.behavior >= config_.num_behaviors) {
      throw IndexError("behavior " + std::to_string(s.behavior) + " out of range");
    }
    Tape::StepRecord* rec = tape ? &tape->steps[t] : nullptr;
    Vector be = behavior_emb_.lookup(params_, p.prev_behavior);
    Vector ie = item_emb_.lookup(params_, item);
    const Vector bproj = wx.leftCols(E) * be;
    const Vector iproj = wx.rightCols(E) * ie;
    const Vector proj = bproj + iproj;
    p.h = gru_.step_projected(params_, p.h, proj, nullptr, rec ? &rec->gru : nullptr);
    out.push_back(head_.forward(params_, p.h, rec ? &rec->head : nullptr));
    if (rec) {
      rec->behavior_in = p.prev_behavior;
      rec->item_in = item;
      rec->behavior_emb = std::move(be);
      rec->item_emb = std::move(ie);
    }
    p.prev_behavior = s.behavior;
  }
  if (tape) tape->valid = true;
  return out;
}

void SequenceNet::set_output_bias(const Vector& bias) {
  if (bias.size() != output_size_) throw ShapeError("output bias size mismatch");
  params_[head_.layers.back().bias].value = bias;
}

void SequenceNet::backward(const Tape& tape, std::span<const Vector> d_outputs) {
  if (!tape.valid) throw StateError("backward called before forward");
  if (d_outputs.size() != tape.steps.size()) throw ShapeError("one output gradient per step required");
  const int E = config_.embed_size;
  const int H = config_.hidden_size;
  auto& wx = params_[gru_.w_input];
  Vector dh_next = Vector::Zero(H);
  Vector dh_prev;
  for (std::size_t t = tape.steps.size(); t-- > 0;) {
    const auto& rec = tape.steps[t];
    Vector dh = head_.backward(params_, rec.head, d_outputs[t]);
    dh += dh_next;
    const Vector dproj = gru_.backward_projected(params_, rec.gru, dh, dh_prev);
    wx.grad.leftCols(E).noalias() += dproj * rec.behavior_emb.transpose();
    wx.grad.rightCols(E).noalias() += dproj * rec.item_emb.transpose();
    behavior_emb_.backward(params_, rec.behavior_in, wx.value.leftCols(E).transpose() * dproj);
    item_emb_.backward(params_, rec.item_in, wx.value.rightCols(E).transpose() * dproj);
    dh_next = dh_prev;
  }
  if (config_.user_embedding) user_emb_.backward(params_, tape.user, dh_next);
}

std::vector<double> fit(SequenceNet& net, std::size_t num_examples, const FitOptions& options,
                        nn::Rng& shuffle_rng,
                        const std::function<double(std::size_t, SequenceNet&)>& accumulate,
                        const FitHooks& hooks) {
  if (num_examples == 0) throw std::invalid_argument("fit: no training examples");
  if (options.batch_size <= 0 || options.epochs < 0) throw std::invalid_argument("fit: bad options");
  nn::AdamState adam(net.params());
  std::vector<std::size_t> order(num_examples);
  std::vector<double> curve;
  const std::size_t used =
      options.epoch_samples == 0 ? num_examples : std::min(num_examples, options.epoch_samples);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (hooks.before_epoch) hooks.before_epoch(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (std::size_t begin = 0; begin < used; begin += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(used, begin + static_cast<std::size_t>(options.batch_size));
      if (hooks.before_batch) hooks.before_batch();
      net.params().zero_grad();
      for (std::size_t k = begin; k < end; ++k) total += accumulate(order[k], net);
      net.params().scale_grad(1.0 / static_cast<double>(end - begin));
      nn::adam_update(net.params(), adam, options.adam);
      if (hooks.after_update) hooks.after_update();
    }
    curve.push_back(total / static_cast<double>(used));
  }
  return curve;
}

}  // namespace mbcal::model
