#include "mbcal/model/fam.hpp"

#include <stdexcept>

#include "mbcal/error.hpp"

namespace mbcal::model {

namespace {

std::vector<double> labels_for(const CfaLabelSet& labels, std::size_t i) {
  std::vector<double> out(static_cast<std::size_t>(labels.horizon));
  for (int t = 0; t < labels.horizon; ++t) out[static_cast<std::size_t>(t)] = labels.at(i, t).label;
  return out;
}

}  // namespace

double Fam::value(int user, std::span<const data::Step> prefix, int action) const {
  return net_.output(net_.encode(user, prefix), action)[0];
}

double Fam::loss(const data::Trajectory& traj, std::span<const double> labels) const {
  if (labels.size() != traj.steps.size()) throw ShapeError("one label per step required");
  const auto out = net_.forward(traj);
  double total = 0.0;
  for (std::size_t t = 0; t < out.size(); ++t) total += nn::mse_loss(out[t][0], labels[t]);
  return total / static_cast<double>(out.size());
}

double Fam::accumulate_gradient(const data::Trajectory& traj, std::span<const double> labels) {
  if (labels.size() != traj.steps.size()) throw ShapeError("one label per step required");
  SequenceNet::Tape tape;
  const auto out = net_.forward(traj, &tape);
  const double inv_t = 1.0 / static_cast<double>(out.size());
  std::vector<Vector> grads;
  grads.reserve(out.size());
  double total = 0.0;
  for (std::size_t t = 0; t < out.size(); ++t) {
    total += nn::mse_loss(out[t][0], labels[t]);
    grads.push_back(Vector::Constant(1, nn::mse_grad(out[t][0], labels[t]) * inv_t));
  }
  net_.backward(tape, grads);
  return total * inv_t;
}

FamTrainResult train_fam(const data::Dataset& dataset, const CfaLabelSet& labels, const FamConfig& config,
                         const Fam* init) {
  if (dataset.empty()) throw std::invalid_argument("train_fam: empty dataset");
  labels.check_aligned(dataset);
  FamTrainResult result{Fam(config.encoder, config.seed), {}};
  if (init) result.model.net().params().copy_values_from(init->net().params());
  std::vector<std::vector<double>> per_traj;
  per_traj.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) per_traj.push_back(labels_for(labels, i));
  if (!init && config.center_output) {
    double sum = 0.0;
    for (const auto& r : labels.records) sum += r.label;
    result.model.net().set_output_bias(Vector::Constant(1, sum / static_cast<double>(labels.records.size())));
  }

  // FAM sees the logged trajectories with no mask flags.
  std::vector<data::Trajectory> clean(dataset.trajectories);
  for (auto& t : clean) {
    for (auto& s : t.steps) s.masked = false;
  }
  nn::Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  FitOptions options{config.epochs, config.batch_size, config.epoch_samples, config.adam};
  result.loss_curve = fit(result.model.net(), clean.size(), options, shuffle_rng,
                          [&](std::size_t i, SequenceNet&) {
                            return result.model.accumulate_gradient(clean[i], per_traj[i]);
                          });
  return result;
}

double fam_mse(const Fam& fam, const data::Dataset& dataset, const CfaLabelSet& labels) {
  if (dataset.empty()) throw std::invalid_argument("fam_mse: empty dataset");
  labels.check_aligned(dataset);
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    total += fam.loss(dataset.trajectories[i], labels_for(labels, i));
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace mbcal::model
