#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mbcal/data/trajectory.hpp"
#include "mbcal/model/mem.hpp"

namespace mbcal::model {

/// Label used to train the future advantage model.
enum class LabelMode {
  cfa,  ///< counterfactual future advantage (variance reduced)
  sfr,  ///< raw simulated future reward (ablation)
};

std::string to_string(LabelMode mode);
LabelMode label_mode_from_string(const std::string& s);

/// MEM-predicted expected reward at every step of `traj`, each conditioned on
/// the logged prefix before it (masked flags honored).
std::vector<double> step_expected_rewards(const Mem& mem, const data::Trajectory& traj,
                                          const SequenceNet::InferenceCache* cache = nullptr);

/// sum_{tau = t+1}^{T-1} gamma^(tau - t) * r_hat(prefix_tau, a_tau) for the
/// zero-based step t. Logged actions and behaviors are reused, never resampled.
double simulated_future_reward(const Mem& mem, const data::Trajectory& traj, int t, double gamma);

/// SFR of `traj` minus SFR of `traj` with only step t masked.
double counterfactual_future_advantage(const Mem& mem, const data::Trajectory& traj, int t,
                                       double gamma);

struct CfaRecord {
  std::string trajectory_id;
  int t = 0;
  double sfr = 0.0;
  double sfr_masked = 0.0;
  /// sfr - sfr_masked in cfa mode, sfr in sfr mode.
  double label = 0.0;
  LabelMode mode = LabelMode::cfa;

  friend bool operator==(const CfaRecord&, const CfaRecord&) = default;
};

/// One record per (trajectory, step), trajectory-major in dataset order.
struct CfaLabelSet {
  LabelMode mode = LabelMode::cfa;
  double gamma = 0.95;
  int horizon = 0;
  std::vector<CfaRecord> records;

  const CfaRecord& at(std::size_t trajectory, int t) const {
    return records.at(trajectory * static_cast<std::size_t>(horizon) + static_cast<std::size_t>(t));
  }
  /// Throws unless records line up with `dataset` by trajectory id and step.
  void check_aligned(const data::Dataset& dataset) const;

  friend bool operator==(const CfaLabelSet&, const CfaLabelSet&) = default;
};

CfaLabelSet build_cfa_labels(const Mem& mem, const data::Dataset& dataset, double gamma, LabelMode mode);

// JSON-lines: {"traj":id,"t":t,"sfr":..,"sfr_masked":..,"label":..,"mode":"cfa"|"sfr"}
void save_labels(const std::filesystem::path& path, const CfaLabelSet& labels);
CfaLabelSet load_labels(const std::filesystem::path& path, double gamma, int horizon);

}  // namespace mbcal::model
