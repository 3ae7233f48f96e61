#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mbcal/agents/q_learning.hpp"
#include "mbcal/model/fam.hpp"
#include "mbcal/model/mem.hpp"
#include "mbcal/sim/simulator.hpp"

namespace mbcal::harness {

enum class Protocol { batch, growing_batch };

enum class AgentKind { mbcal, mbcal_sfr, gru4rec, gru4rec_eps, dqn, ddqn, mcpe };

std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);
std::string to_string(AgentKind k);
AgentKind agent_kind_from_string(const std::string& s);
std::vector<AgentKind> all_agent_kinds();

struct Seeds {
  std::uint64_t simulator = 7;
  std::uint64_t agent = 1;
  std::uint64_t exploration = 3;
};

/// Model and optimizer settings shared by every agent.
struct AgentSettings {
  int embed_size = 32;
  int hidden_size = 32;
  int mlp_hidden = 32;
  bool user_embedding = true;
  double p_mask = 0.2;
  bool resample_masks = true;
  int mem_epochs = 4;
  int fam_epochs = 4;
  int q_epochs = 4;
  int batch_size = 32;
  /// Sessions drawn per training epoch; 0 trains on the whole dataset.
  int epoch_samples = 0;
  /// Start scalar regression heads (FAM, Q) at the mean of their targets.
  bool center_outputs = true;
  double learning_rate = 1e-3;
  int target_sync = 100;
  bool reward_to_go = false;
};

struct ExperimentConfig {
  Protocol protocol = Protocol::growing_batch;
  std::vector<AgentKind> agents{AgentKind::mbcal};
  int rounds = 10;
  int train_sessions = 2000;
  int test_sessions = 1000;
  /// Independent repetitions; replicate r derives its agent and exploration
  /// streams from the named seeds and r.
  int replicates = 3;
  double gamma = 0.95;
  double epsilon = 0.1;
  Seeds seeds;
  /// Growing batch: train on all rounds' collections pooled (true) or on the
  /// latest round only.
  bool pool_rounds = true;
  /// Growing batch: initialize each round's models from the previous round's.
  bool warm_start = false;
  /// Batch RL: read the static log from this file instead of collecting one
  /// with the uniform-random policy.
  std::string log_path;
  sim::SimConfig simulator;
  AgentSettings agent;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// The simulator configuration with its seed taken from seeds.simulator.
  sim::SimConfig simulator_config() const;
  model::EncoderConfig encoder() const;
  model::MemConfig mem_config(std::uint64_t seed) const;
  model::FamConfig fam_config(std::uint64_t seed) const;
  agents::QConfig q_config(agents::QTarget target, std::uint64_t seed) const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Unknown keys are errors; missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

/// Applies "dotted.key=value" overrides to a config document. Values are
/// parsed as JSON when possible and taken as strings otherwise.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

}  // namespace mbcal::harness
