// Command-line front end: simulate logs, train agents, build labels, evaluate,
// and run the Batch-RL / Growing Batch-RL protocols.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mbcal/data/dataset_io.hpp"
#include "mbcal/error.hpp"
#include "mbcal/harness/experiment.hpp"
#include "mbcal/seed.hpp"

using namespace mbcal;
using harness::ExperimentConfig;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kInvariant = 3 };

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", path, "Experiment config (JSON); defaults are used when omitted");
    app->add_option("--set", overrides, "Override a config field, e.g. --set agent.mem_epochs=2")->allow_extra_args(false);
  }

  ExperimentConfig load() const {
    nlohmann::json doc = harness::to_json(ExperimentConfig{});
    if (!path.empty()) {
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot read config " + path);
      const auto user = nlohmann::json::parse(in);
      doc.merge_patch(user);
    }
    harness::apply_overrides(doc, overrides);
    return harness::config_from_json(doc);
  }
};

void print_round(const harness::RoundMetrics& m) {
  std::fprintf(stderr, "%-12s seed %d round %2d  avg_reward %8.3f  mse %9.4f  train %6zu  (%.1fs)\n",
               m.agent.c_str(), m.seed, m.round, m.avg_reward, m.mse_objective, m.train_sessions, m.wall_seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-based counterfactual advantage learning for sequential recommendation"};
  app.require_subcommand(1);

  // simulate
  ConfigArgs sim_cfg;
  std::string sim_out, sim_agent_dir;
  int sim_sessions = 1000, sim_replicate = 0, sim_round = 0;
  double sim_epsilon = 0.0;
  auto* simulate = app.add_subcommand("simulate", "Generate a logged dataset from the simulator");
  sim_cfg.attach(simulate);
  simulate->add_option("-o,--out", sim_out, "Output dataset (JSONL)")->required();
  simulate->add_option("-n,--sessions", sim_sessions, "Number of sessions")->check(CLI::PositiveNumber);
  simulate->add_option("--agent", sim_agent_dir, "Trained agent directory used as the logging policy (default: uniform random)");
  simulate->add_option("--epsilon", sim_epsilon, "Exploration rate of the logging policy")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--replicate", sim_replicate, "Replicate index for seed derivation");
  simulate->add_option("--round", sim_round, "Round index for seed derivation");

  // train
  ConfigArgs train_cfg;
  std::string train_data, train_out, train_agent = "mbcal";
  auto* train = app.add_subcommand("train", "Train one agent on a logged dataset");
  train_cfg.attach(train);
  train->add_option("-d,--data", train_data, "Training dataset (JSONL)")->required()->check(CLI::ExistingFile);
  train->add_option("-a,--agent", train_agent, "mbcal, mbcal_sfr, gru4rec, gru4rec_eps, dqn, ddqn or mcpe");
  train->add_option("-o,--out", train_out, "Output agent directory")->required();

  // labels build
  ConfigArgs labels_cfg;
  std::string labels_mem, labels_data, labels_out, labels_mode = "cfa";
  auto* labels = app.add_subcommand("labels", "Future-reward label tools");
  labels->require_subcommand(1);
  auto* labels_build = labels->add_subcommand("build", "Compute CFA or SFR labels with a trained MEM");
  labels_cfg.attach(labels_build);
  labels_build->add_option("--agent", labels_mem, "Agent directory holding mem.json")->required();
  labels_build->add_option("-d,--data", labels_data, "Dataset (JSONL)")->required()->check(CLI::ExistingFile);
  labels_build->add_option("--mode", labels_mode, "cfa or sfr")->check(CLI::IsMember({"cfa", "sfr"}));
  labels_build->add_option("-o,--out", labels_out, "Output labels (JSONL)")->required();

  // evaluate
  ConfigArgs eval_cfg;
  std::string eval_agent, eval_out;
  int eval_sessions = 1000, eval_replicate = 0;
  auto* evaluate = app.add_subcommand("evaluate", "Run greedy test sessions with a trained agent");
  eval_cfg.attach(evaluate);
  evaluate->add_option("--agent", eval_agent, "Agent directory")->required();
  evaluate->add_option("-n,--sessions", eval_sessions, "Number of test sessions")->check(CLI::PositiveNumber);
  evaluate->add_option("--replicate", eval_replicate, "Replicate index for seed derivation");
  evaluate->add_option("-o,--out", eval_out, "Optional output for the test log (JSONL)");

  // mem eval
  ConfigArgs mem_cfg;
  std::string mem_agent, mem_data;
  auto* mem = app.add_subcommand("mem", "Environment model tools");
  mem->require_subcommand(1);
  auto* mem_eval = mem->add_subcommand("eval", "Behavior NLL, accuracy and per-class F1 of a MEM");
  mem_cfg.attach(mem_eval);
  mem_eval->add_option("--agent", mem_agent, "Agent directory holding mem.json")->required();
  mem_eval->add_option("-d,--data", mem_data, "Dataset (JSONL)")->required()->check(CLI::ExistingFile);

  // protocols
  ConfigArgs batch_cfg, grow_cfg, mse_cfg;
  std::string batch_out, grow_out, mse_out;
  bool batch_append = false, grow_append = false;
  auto* batch = app.add_subcommand("batch", "Batch-RL: train on a static log, test once");
  batch_cfg.attach(batch);
  batch->add_option("-o,--out", batch_out, "Metrics CSV")->required();
  batch->add_flag("--append", batch_append, "Append rows to an existing CSV");
  auto* grow = app.add_subcommand("growing-batch", "Growing Batch-RL: alternate collection and policy updates");
  grow_cfg.attach(grow);
  grow->add_option("-o,--out", grow_out, "Metrics CSV")->required();
  grow->add_flag("--append", grow_append, "Append rows to an existing CSV");
  auto* mse = app.add_subcommand("mse-report", "Objective MSE of each agent on a held-out log");
  mse_cfg.attach(mse);
  mse->add_option("-o,--out", mse_out, "MSE CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      const auto cfg = sim_cfg.load();
      const sim::Simulator s(cfg.simulator_config());
      std::shared_ptr<const agents::Policy> policy = std::make_shared<agents::RandomPolicy>();
      if (!sim_agent_dir.empty()) policy = harness::load_agent(sim_agent_dir, cfg).policy;
      long used = 0;
      const auto ds = harness::collect(s, *policy, cfg, sim_replicate, sim_round, harness::Phase::log, sim_sessions,
                                       sim_epsilon, used);
      data::save_dataset(sim_out, ds);
      std::printf("wrote %zu sessions (%ld interactions), avg reward %.4f\n", ds.size(), used,
                  harness::average_reward_per_session(ds));
    } else if (*train) {
      const auto cfg = train_cfg.load();
      const auto ds = data::load_dataset(train_data);
      const auto kind = harness::agent_kind_from_string(train_agent);
      const auto agent = harness::train_agent(kind, ds, cfg, derive_seed(cfg.seeds.agent, {0, 1}));
      harness::save_agent(train_out, agent);
      for (const auto& [name, curve] : agent.curves) {
        std::printf("%s loss:", name.c_str());
        for (double l : curve) std::printf(" %.5f", l);
        std::printf("\n");
      }
    } else if (*labels_build) {
      const auto cfg = labels_cfg.load();
      const auto agent = harness::load_agent(labels_mem, cfg);
      if (!agent.mem) throw std::invalid_argument("agent has no MEM");
      const auto ds = data::load_dataset(labels_data);
      const auto set = model::build_cfa_labels(*agent.mem, ds, cfg.gamma, model::label_mode_from_string(labels_mode));
      model::save_labels(labels_out, set);
      std::printf("wrote %zu labels\n", set.records.size());
    } else if (*evaluate) {
      const auto cfg = eval_cfg.load();
      const sim::Simulator s(cfg.simulator_config());
      const auto agent = harness::load_agent(eval_agent, cfg);
      long used = 0;
      const auto test = harness::collect(s, *agent.policy, cfg, eval_replicate, 1, harness::Phase::test,
                                         eval_sessions, 0.0, used);
      if (!eval_out.empty()) data::save_dataset(eval_out, test);
      std::printf("avg_reward %.6f\nmse_objective %.6f\n", harness::average_reward_per_session(test),
                  harness::objective_mse(agent, test, cfg));
    } else if (*mem_eval) {
      const auto cfg = mem_cfg.load();
      const auto agent = harness::load_agent(mem_agent, cfg);
      if (!agent.mem) throw std::invalid_argument("agent has no MEM");
      const auto e = model::evaluate_mem(*agent.mem, data::load_dataset(mem_data));
      std::printf("nll %.6f\naccuracy %.6f\nmacro_f1 %.6f\n", e.nll, e.accuracy, e.macro_f1);
      for (std::size_t i = 0; i < e.f1.size(); ++i) std::printf("f1[%zu] %.6f\n", i, e.f1[i]);
    } else if (*batch || *grow) {
      auto cfg = (*batch ? batch_cfg : grow_cfg).load();
      cfg.protocol = *batch ? harness::Protocol::batch : harness::Protocol::growing_batch;
      harness::RunObserver obs;
      obs.on_round = print_round;
      const auto result = harness::run_experiment(cfg, obs);
      harness::emit_metrics(*batch ? batch_out : grow_out, result.rows, *batch ? batch_append : grow_append);
      std::fprintf(stderr, "interactions %ld (budget %ld), %zu training ids, %zu test ids, no overlap\n",
                   result.interactions, result.expected_interactions, result.ledger.training_ids(),
                   result.ledger.test_ids());
    } else if (*mse) {
      const auto rows = harness::mse_analysis(mse_cfg.load());
      harness::emit_mse(mse_out, rows);
      for (const auto& r : rows) std::printf("%-12s seed %d  mse %.6f\n", r.agent.c_str(), r.seed, r.mse);
    }
  } catch (const ProtocolError& e) {
    std::fprintf(stderr, "invariant violated: %s\n", e.what());
    return kInvariant;
  } catch (const NonFiniteError& e) {
    std::fprintf(stderr, "invariant violated: %s\n", e.what());
    return kInvariant;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
