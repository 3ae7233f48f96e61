#include "mbcal/model/mem.hpp"

#include <stdexcept>

#include "mbcal/error.hpp"

namespace mbcal::model {

Mem::Mem(const EncoderConfig& encoder, data::BehaviorSpace space, std::uint64_t seed)
    : space_(std::move(space)), net_(encoder, space_.size(), seed) {
  if (encoder.num_behaviors != space_.size()) {
    throw std::invalid_argument("encoder behavior count differs from the behavior space");
  }
}

Vector Mem::distribution(int user, std::span<const data::Step> prefix, int action) const {
  const auto p = net_.encode(user, prefix);
  return nn::softmax(net_.output(p, action));
}

double Mem::expected_reward(const Vector& dist) const {
  double r = 0.0;
  for (int n = 0; n < space_.size(); ++n) r += space_.rewards()[static_cast<std::size_t>(n)] * dist[n];
  return r;
}

double Mem::expected_reward(int user, std::span<const data::Step> prefix, int action) const {
  return expected_reward(distribution(user, prefix, action));
}

double Mem::loss(const data::Trajectory& traj, nn::LossStats* stats) const {
  const auto logits = net_.forward(traj);
  double total = 0.0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    total += nn::nll_loss(nn::softmax(logits[t]), traj.steps[t].behavior, stats);
  }
  return total / static_cast<double>(logits.size());
}

double Mem::accumulate_gradient(const data::Trajectory& traj, nn::LossStats* stats) {
  if (traj.steps.empty()) throw std::invalid_argument("empty trajectory");
  SequenceNet::Tape tape;
  const auto logits = net_.forward(traj, &tape);
  const double inv_t = 1.0 / static_cast<double>(logits.size());
  std::vector<Vector> grads;
  grads.reserve(logits.size());
  double total = 0.0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const Vector probs = nn::softmax(logits[t]);
    const int label = traj.steps[t].behavior;
    total += nn::nll_loss(probs, label, stats);
    grads.push_back(nn::softmax_nll_grad(probs, label) * inv_t);
  }
  net_.backward(tape, grads);
  return total * inv_t;
}

MemTrainResult train_mem(const data::Dataset& dataset, const MemConfig& config, const Mem* init) {
  if (dataset.empty()) throw std::invalid_argument("train_mem: empty dataset");
  if (!(config.p_mask >= 0.0 && config.p_mask <= 1.0)) throw std::invalid_argument("p_mask must lie in [0, 1]");

  MemTrainResult result{Mem(config.encoder, dataset.space, config.seed), {}, 0};
  if (init) result.model.net().params().copy_values_from(init->net().params());
  // Separate streams: masking never perturbs the batch order.
  nn::Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  nn::Rng mask_rng(config.seed ^ 0xc2b2ae3d27d4eb4fULL);

  std::vector<data::Trajectory> masked(dataset.trajectories);
  auto draw_masks = [&] {
    if (config.p_mask <= 0.0) return;
    for (std::size_t i = 0; i < masked.size(); ++i) {
      const auto& src = dataset.trajectories[i];
      masked[i] = data::apply_mask(src, data::mask_positions(src, config.p_mask, mask_rng));
    }
  };

  nn::LossStats stats;
  FitHooks hooks;
  hooks.before_epoch = [&](int epoch) {
    if (epoch == 0 || config.resample_masks) draw_masks();
  };
  FitOptions options{config.epochs, config.batch_size, config.epoch_samples, config.adam};
  result.loss_curve = fit(
      result.model.net(), masked.size(), options, shuffle_rng,
      [&](std::size_t i, SequenceNet&) { return result.model.accumulate_gradient(masked[i], &stats); },
      hooks);
  result.clamped_probabilities = stats.clamped;
  return result;
}

MemEvaluation evaluate_mem(const Mem& mem, const data::Dataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_mem: empty dataset");
  const int n = mem.space().size();
  std::vector<double> tp(n, 0.0), fp(n, 0.0), fn(n, 0.0);
  double nll = 0.0;
  double correct = 0.0;
  double count = 0.0;
  for (const auto& traj : dataset.trajectories) {
    const auto logits = mem.net().forward(traj);
    for (std::size_t t = 0; t < logits.size(); ++t) {
      const Vector probs = nn::softmax(logits[t]);
      const int label = traj.steps[t].behavior;
      nll += nn::nll_loss(probs, label);
      Eigen::Index pred = 0;
      probs.maxCoeff(&pred);
      if (pred == label) {
        ++correct;
        ++tp[static_cast<std::size_t>(label)];
      } else {
        ++fp[static_cast<std::size_t>(pred)];
        ++fn[static_cast<std::size_t>(label)];
      }
      ++count;
    }
  }
  MemEvaluation ev;
  ev.nll = nll / count;
  ev.accuracy = correct / count;
  for (int k = 0; k < n; ++k) {
    const double denom = 2 * tp[k] + fp[k] + fn[k];
    ev.f1.push_back(denom > 0 ? 2 * tp[k] / denom : 0.0);
    ev.macro_f1 += ev.f1.back() / n;
  }
  return ev;
}

}  // namespace mbcal::model
