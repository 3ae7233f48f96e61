#include "mbcal/model/cfa.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "mbcal/error.hpp"

namespace mbcal::model {

std::string to_string(LabelMode mode) { return mode == LabelMode::cfa ? "cfa" : "sfr"; }

LabelMode label_mode_from_string(const std::string& s) {
  if (s == "cfa") return LabelMode::cfa;
  if (s == "sfr") return LabelMode::sfr;
  throw std::invalid_argument("unknown label mode '" + s + "' (expected cfa or sfr)");
}

namespace {

void check_step(const data::Trajectory& traj, int t) {
  if (t < 0 || t >= traj.horizon()) {
    throw IndexError("step " + std::to_string(t) + " outside trajectory of length " +
                     std::to_string(traj.horizon()));
  }
}

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("discount must lie in [0, 1]");
}

double discounted_tail(const std::vector<double>& rhat, int t, double gamma) {
  double s = 0.0;
  for (int tau = t + 1; tau < static_cast<int>(rhat.size()); ++tau) {
    s += std::pow(gamma, tau - t) * rhat[static_cast<std::size_t>(tau)];
  }
  return s;
}

/// Expected rewards at steps > t with step t replaced by the mask item,
/// starting from the encoder state before step t.
std::vector<double> masked_tail_rewards(const Mem& mem, const data::Trajectory& traj, int t,
                                        SequenceNet::Prefix prefix,
                                        const SequenceNet::InferenceCache* cache) {
  const auto& net = mem.net();
  std::vector<double> rhat(traj.steps.size(), 0.0);
  const auto& st = traj.steps[static_cast<std::size_t>(t)];
  net.advance(prefix, net.mask_item(), st.behavior, cache);
  for (std::size_t tau = static_cast<std::size_t>(t) + 1; tau < traj.steps.size(); ++tau) {
    const auto& s = traj.steps[tau];
    rhat[tau] = mem.expected_reward(nn::softmax(net.advance(prefix, net.input_item(s), s.behavior, cache)));
  }
  return rhat;
}

}  // namespace

std::vector<double> step_expected_rewards(const Mem& mem, const data::Trajectory& traj,
                                          const SequenceNet::InferenceCache* cache) {
  const auto& net = mem.net();
  auto prefix = net.start(traj.user);
  std::vector<double> rhat;
  rhat.reserve(traj.steps.size());
  for (const auto& s : traj.steps) {
    rhat.push_back(mem.expected_reward(nn::softmax(net.advance(prefix, net.input_item(s), s.behavior, cache))));
  }
  return rhat;
}

double simulated_future_reward(const Mem& mem, const data::Trajectory& traj, int t, double gamma) {
  check_step(traj, t);
  check_gamma(gamma);
  return discounted_tail(step_expected_rewards(mem, traj), t, gamma);
}

double counterfactual_future_advantage(const Mem& mem, const data::Trajectory& traj, int t, double gamma) {
  check_step(traj, t);
  check_gamma(gamma);
  const double original = discounted_tail(step_expected_rewards(mem, traj), t, gamma);
  const auto prefix = mem.net().encode(traj.user, std::span(traj.steps).first(static_cast<std::size_t>(t)));
  const double masked = discounted_tail(masked_tail_rewards(mem, traj, t, prefix, nullptr), t, gamma);
  return original - masked;
}

void CfaLabelSet::check_aligned(const data::Dataset& dataset) const {
  if (records.size() != dataset.size() * static_cast<std::size_t>(dataset.horizon) ||
      horizon != dataset.horizon) {
    throw std::invalid_argument("label set has " + std::to_string(records.size()) +
                                " records, dataset needs " +
                                std::to_string(dataset.size() * static_cast<std::size_t>(dataset.horizon)));
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (int t = 0; t < horizon; ++t) {
      const auto& r = at(i, t);
      if (r.trajectory_id != dataset.trajectories[i].id || r.t != t) {
        throw std::invalid_argument("label record (" + r.trajectory_id + ", " + std::to_string(r.t) +
                                    ") misaligned with trajectory '" + dataset.trajectories[i].id + "' step " +
                                    std::to_string(t));
      }
    }
  }
}

CfaLabelSet build_cfa_labels(const Mem& mem, const data::Dataset& dataset, double gamma, LabelMode mode) {
  check_gamma(gamma);
  CfaLabelSet labels;
  labels.mode = mode;
  labels.gamma = gamma;
  labels.horizon = dataset.horizon;
  labels.records.reserve(dataset.size() * static_cast<std::size_t>(dataset.horizon));
  const auto cache = mem.net().build_cache();
  const auto& net = mem.net();
  for (const auto& traj : dataset.trajectories) {
    if (traj.horizon() != dataset.horizon) throw std::invalid_argument("trajectory '" + traj.id + "' has wrong length");
    const auto rhat = step_expected_rewards(mem, traj, &cache);
    auto prefix = net.start(traj.user);
    for (int t = 0; t < traj.horizon(); ++t) {
      CfaRecord r;
      r.trajectory_id = traj.id;
      r.t = t;
      r.mode = mode;
      r.sfr = discounted_tail(rhat, t, gamma);
      r.sfr_masked = discounted_tail(masked_tail_rewards(mem, traj, t, prefix, &cache), t, gamma);
      r.label = mode == LabelMode::cfa ? r.sfr - r.sfr_masked : r.sfr;
      labels.records.push_back(std::move(r));
      const auto& s = traj.steps[static_cast<std::size_t>(t)];
      net.advance(prefix, net.input_item(s), s.behavior, &cache);
    }
  }
  return labels;
}

void save_labels(const std::filesystem::path& path, const CfaLabelSet& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write labels " + path.string());
  for (const auto& r : labels.records) {
    nlohmann::json j = {{"traj", r.trajectory_id}, {"t", r.t},         {"sfr", r.sfr},
                        {"sfr_masked", r.sfr_masked}, {"label", r.label}, {"mode", to_string(r.mode)}};
    out << j.dump() << '\n';
  }
}

CfaLabelSet load_labels(const std::filesystem::path& path, double gamma, int horizon) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read labels " + path.string());
  CfaLabelSet labels;
  labels.gamma = gamma;
  labels.horizon = horizon;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CfaRecord r;
      r.trajectory_id = j.at("traj").get<std::string>();
      r.t = j.at("t").get<int>();
      r.sfr = j.at("sfr").get<double>();
      r.sfr_masked = j.at("sfr_masked").get<double>();
      r.label = j.at("label").get<double>();
      r.mode = label_mode_from_string(j.at("mode").get<std::string>());
      labels.mode = r.mode;
      labels.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw FormatError(std::string("malformed label record: ") + e.what(), lineno);
    }
  }
  return labels;
}

}  // namespace mbcal::model
