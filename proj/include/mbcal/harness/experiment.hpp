#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mbcal/agents/mbcal_policy.hpp"
#include "mbcal/agents/q_learning.hpp"
#include "mbcal/harness/config.hpp"
#include "mbcal/model/cfa.hpp"
#include "mbcal/sim/simulator.hpp"

namespace mbcal::harness {

/// 1/|D| * sum over sessions of summed per-step rewards.
double average_reward_per_session(const data::Dataset& testset);

/// A trained agent: its policy plus whichever models back it.
struct TrainedAgent {
  AgentKind kind = AgentKind::mbcal;
  std::shared_ptr<const agents::Policy> policy;
  std::shared_ptr<const model::Mem> mem;
  std::shared_ptr<const model::Fam> fam;
  std::shared_ptr<const model::SequenceNet> q;
  /// Loss curves of each trained component, e.g. "mem", "fam", "q".
  std::vector<std::pair<std::string, std::vector<double>>> curves;
};

struct MbcalUpdate {
  std::shared_ptr<const model::Mem> mem;
  std::shared_ptr<const model::Fam> fam;
  model::CfaLabelSet labels;
  std::vector<double> mem_curve;
  std::vector<double> fam_curve;
};

/// MEM on masked data, then labels, then FAM.
MbcalUpdate policy_update_mbcal(const data::Dataset& dataset, const ExperimentConfig& config,
                                model::LabelMode mode, std::uint64_t seed,
                                const model::Mem* mem_init = nullptr, const model::Fam* fam_init = nullptr);

/// Trains `kind` on `dataset`. `previous` (same kind) warm-starts the models.
TrainedAgent train_agent(AgentKind kind, const data::Dataset& dataset, const ExperimentConfig& config,
                         std::uint64_t seed, const TrainedAgent* previous = nullptr);

/// Writes agent.json plus one parameter checkpoint per model into `dir`.
void save_agent(const std::filesystem::path& dir, const TrainedAgent& agent);
/// Rebuilds an agent saved by save_agent; model shapes come from `config`.
TrainedAgent load_agent(const std::filesystem::path& dir, const ExperimentConfig& config);

/// The agent's own training objective evaluated on a held-out log:
/// FAM error against labels of its mode for MBCAL, squared instant-reward
/// error for GRU4Rec, TD error for DQN/DDQN and Monte Carlo error for MCPE.
double objective_mse(const TrainedAgent& agent, const data::Dataset& log, const ExperimentConfig& config);

/// Collection phases tag trajectory ids.
enum class Phase { log, train, test, holdout };
std::string to_string(Phase p);

/// Records which trajectory ids entered training and which were test data.
class ProvenanceLedger {
 public:
  void record_training(const data::Dataset& d);
  void record_test(const data::Dataset& d);
  /// Throws ProtocolError naming the first test id found in training data.
  void check() const;
  std::size_t training_ids() const { return training_.size(); }
  std::size_t test_ids() const { return test_.size(); }

 private:
  std::set<std::string> training_;
  std::set<std::string> test_;
};

/// Runs `n` sessions of `policy` for replicate/round/phase; ids are
/// "{owner}/s{replicate}-{phase}-r{round}-{index}" ("s..." with no owner).
/// Session streams depend on replicate, phase, round and index only, so
/// different agents face the same users and candidates. Adds the number of
/// simulator steps to `interactions`.
data::Dataset collect(const sim::Simulator& sim, const agents::Policy& policy, const ExperimentConfig& config,
                      int replicate, int round, Phase phase, int n, double epsilon, long& interactions,
                      const std::string& owner = "");

struct RoundMetrics {
  std::string agent;
  int seed = 0;
  int round = 0;
  double avg_reward = 0.0;
  double mse_objective = 0.0;
  std::size_t train_sessions = 0;
  long interactions = 0;
  double wall_seconds = 0.0;  // not written to CSV
};

struct RunObserver {
  /// Called after every round with the metrics just computed.
  std::function<void(const RoundMetrics&)> on_round;
};

struct ExperimentResult {
  std::vector<RoundMetrics> rows;
  ProvenanceLedger ledger;
  long interactions = 0;
  long expected_interactions = 0;
};

/// Trains once on a static log (uniform-random policy unless config.log_path
/// is set) and runs one greedy test round, per agent and replicate.
ExperimentResult run_batch_rl(const ExperimentConfig& config, const RunObserver& observer = {});

/// Alternates epsilon-greedy collection, policy update and a greedy test
/// round for config.rounds rounds, per agent and replicate.
ExperimentResult run_growing_batch_rl(const ExperimentConfig& config, const RunObserver& observer = {});

ExperimentResult run_experiment(const ExperimentConfig& config, const RunObserver& observer = {});

struct MseRow {
  std::string agent;
  int seed = 0;
  double mse = 0.0;
};

/// Trains each configured agent on a uniform-random log and evaluates its
/// objective MSE on a second, held-out uniform-random log of test_sessions.
std::vector<MseRow> mse_analysis(const ExperimentConfig& config);

inline constexpr const char* kMetricsHeader =
    "agent,seed,round,avg_reward,mse_objective,train_sessions,interactions";

/// Writes rows as CSV. With `append`, existing rows are kept and the header is
/// written only for a new or empty file (a different header is an error).
void emit_metrics(const std::filesystem::path& path, const std::vector<RoundMetrics>& rows, bool append);

void emit_mse(const std::filesystem::path& path, const std::vector<MseRow>& rows);

}  // namespace mbcal::harness
