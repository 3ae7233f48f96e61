#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mbcal/data/dataset_io.hpp"
#include "mbcal/error.hpp"
#include "mbcal/harness/experiment.hpp"
#include "mbcal/seed.hpp"

using namespace mbcal;
using namespace mbcal::harness;

namespace {

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Minutes-free experiment: tiny catalog, short sessions, small models.
ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.rounds = 2;
  c.train_sessions = 40;
  c.test_sessions = 20;
  c.replicates = 2;
  c.simulator.num_items = 20;
  c.simulator.num_users = 10;
  c.simulator.candidates = 4;
  c.simulator.horizon = 5;
  c.agent.embed_size = 6;
  c.agent.hidden_size = 6;
  c.agent.mlp_hidden = 8;
  c.agent.mem_epochs = 2;
  c.agent.fam_epochs = 2;
  c.agent.q_epochs = 2;
  c.agent.batch_size = 8;
  c.agent.target_sync = 5;
  return c;
}

data::Trajectory with_behaviors(std::vector<int> behaviors) {
  data::Trajectory t;
  for (std::size_t i = 0; i < behaviors.size(); ++i) t.steps.push_back({static_cast<int>(i), behaviors[i], false});
  return t;
}

}  // namespace

TEST_CASE("average reward per session") {
  data::Dataset d{data::BehaviorSpace::ratings(), 5, {with_behaviors({1, 2, 3, 0, 0})}};
  CHECK(average_reward_per_session(d) == 6.0);
  d.trajectories = {with_behaviors({0, 0, 0, 0, 0})};
  CHECK(average_reward_per_session(d) == 0.0);
  d.trajectories = {with_behaviors({5, 5, 0, 0, 0}), with_behaviors({5, 5, 5, 5, 0})};
  CHECK(average_reward_per_session(d) == 15.0);
  d.trajectories.clear();
  CHECK_THROWS(average_reward_per_session(d));
}

TEST_CASE("experiment config") {
  auto c = tiny_config();
  c.agents = {AgentKind::dqn, AgentKind::mbcal_sfr};
  c.protocol = Protocol::batch;
  const auto round_trip = config_from_json(to_json(c));
  CHECK(to_json(round_trip) == to_json(c));

  const auto path = tmp("mbcal_config_test.json");
  save_config(path, c);
  CHECK(to_json(load_config(path)) == to_json(c));

  auto doc = to_json(c);
  apply_overrides(doc, {"rounds=3", "agent.p_mask=0.5", "protocol=growing-batch", "agents=[\"mcpe\"]"});
  const auto o = config_from_json(doc);
  CHECK(o.rounds == 3);
  CHECK(o.agent.p_mask == 0.5);
  CHECK(o.protocol == Protocol::growing_batch);
  CHECK(o.agents == std::vector<AgentKind>{AgentKind::mcpe});

  auto bad = to_json(c);
  bad["roundz"] = 3;
  CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
  bad = to_json(c);
  bad["rounds"] = 41;
  CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
  bad = to_json(c);
  bad["agents"] = {"dyna"};
  CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
  bad = to_json(c);
  bad["simulator"]["candidates"] = 100;
  CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
  CHECK_THROWS(apply_overrides(doc, {"novalue"}));

  for (auto k : all_agent_kinds()) CHECK(agent_kind_from_string(to_string(k)) == k);
}

TEST_CASE("metrics CSV") {
  std::vector<RoundMetrics> rows;
  for (int seed = 0; seed < 2; ++seed) {
    for (int round = 1; round <= 3; ++round) rows.push_back({"mbcal", seed, round, 10.5 + round, 0.25, 100, 200});
  }
  const auto path = tmp("mbcal_metrics_test.csv");
  emit_metrics(path, rows, false);
  auto text = slurp(path);
  CHECK(text.substr(0, text.find('\n')) == "agent,seed,round,avg_reward,mse_objective,train_sessions,interactions");
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 6);
  CHECK(text.find("mbcal,1,3,13.5,0.25,100,200\n") != std::string::npos);

  emit_metrics(path, {rows[0]}, true);
  const auto appended = slurp(path);
  CHECK(appended.substr(0, text.size()) == text);
  CHECK(std::count(appended.begin(), appended.end(), '\n') == 1 + 7);

  std::ofstream(path, std::ios::trunc) << "something,else\n";
  CHECK_THROWS_AS(emit_metrics(path, rows, true), FormatError);
  const auto fresh = tmp("mbcal_metrics_fresh.csv");
  std::filesystem::remove(fresh);
  emit_metrics(fresh, rows, true);
  CHECK(slurp(fresh) == text);
}

TEST_CASE("provenance ledger") {
  data::Dataset train{data::BehaviorSpace::ratings(), 1, {}}, test = train;
  train.trajectories.push_back(with_behaviors({1}));
  train.trajectories.back().id = "a";
  test.trajectories.push_back(with_behaviors({1}));
  test.trajectories.back().id = "b";
  ProvenanceLedger ledger;
  ledger.record_training(train);
  ledger.record_test(test);
  CHECK_NOTHROW(ledger.check());
  ledger.record_training(test);
  CHECK_THROWS_AS(ledger.check(), ProtocolError);
}

TEST_CASE("policy update pipeline") {
  auto c = tiny_config();
  c.agent.mem_epochs = 5;
  c.agent.fam_epochs = 5;
  c.agent.batch_size = 2;
  c.agent.learning_rate = 5e-3;
  const sim::Simulator sim(c.simulator_config());
  agents::RandomPolicy random;
  long used = 0;
  const auto ds = collect(sim, random, c, 0, 0, Phase::log, 10, 0.0, used);
  CHECK(used == 10 * 5);
  const auto a = policy_update_mbcal(ds, c, model::LabelMode::cfa, 5);
  CHECK(a.mem_curve.back() < a.mem_curve.front());
  CHECK(a.fam_curve.back() < a.fam_curve.front());
  CHECK(a.labels.mode == model::LabelMode::cfa);
  const auto b = policy_update_mbcal(ds, c, model::LabelMode::cfa, 5);
  for (std::size_t i = 0; i < a.fam->net().params().size(); ++i) {
    CHECK(a.fam->net().params()[i].value == b.fam->net().params()[i].value);
  }
  const auto sfr = policy_update_mbcal(ds, c, model::LabelMode::sfr, 5);
  CHECK(sfr.labels.mode == model::LabelMode::sfr);
  for (std::size_t k = 0; k < sfr.labels.records.size(); ++k) CHECK(sfr.labels.records[k].label == a.labels.records[k].sfr);
}

TEST_CASE("agents train, score, save and load") {
  auto c = tiny_config();
  const sim::Simulator sim(c.simulator_config());
  agents::RandomPolicy random;
  long used = 0;
  const auto ds = collect(sim, random, c, 0, 0, Phase::log, 30, 0.0, used);
  const auto holdout = collect(sim, random, c, 0, 0, Phase::holdout, 10, 0.0, used);
  for (auto kind : all_agent_kinds()) {
    CAPTURE(to_string(kind));
    const auto agent = train_agent(kind, ds, c, 9);
    CHECK(agent.policy->name() == to_string(kind));
    const double mse = objective_mse(agent, holdout, c);
    CHECK(std::isfinite(mse));
    CHECK(mse >= 0.0);

    const auto dir = tmp("mbcal_agent_" + to_string(kind));
    save_agent(dir, agent);
    const auto loaded = load_agent(dir, c);
    CHECK(loaded.kind == kind);
    const std::vector<int> cands{0, 3, 7};
    const std::vector<data::Step> prefix{{1, 2, false}};
    CHECK(agents::score_after(*loaded.policy, 2, prefix, cands) == agents::score_after(*agent.policy, 2, prefix, cands));

    // Zero epochs from a warm start leaves the parameters where they were.
    auto frozen = c;
    frozen.agent.mem_epochs = frozen.agent.fam_epochs = frozen.agent.q_epochs = 0;
    const auto warm = train_agent(kind, ds, frozen, 10, &agent);
    CHECK(agents::score_after(*warm.policy, 2, prefix, cands) == agents::score_after(*agent.policy, 2, prefix, cands));
  }
}

TEST_CASE("batch protocol") {
  auto c = tiny_config();
  c.protocol = Protocol::batch;
  c.agents = {AgentKind::gru4rec, AgentKind::mbcal};
  const auto a = run_experiment(c);
  REQUIRE(a.rows.size() == 4);
  for (const auto& m : a.rows) {
    CHECK(std::isfinite(m.avg_reward));
    CHECK(std::isfinite(m.mse_objective));
    CHECK(m.round == 1);
    CHECK(m.train_sessions == 40u);
  }
  CHECK(a.interactions == a.expected_interactions);
  CHECK(a.expected_interactions == 2 * 40 * 5 + 2 * 2 * 20 * 5);
  CHECK(a.ledger.test_ids() == 2 * 2 * 20);

  const auto b = run_experiment(c);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].avg_reward == b.rows[i].avg_reward);
    CHECK(a.rows[i].mse_objective == b.rows[i].mse_objective);
  }

  // A static log read from disk.
  const sim::Simulator sim(c.simulator_config());
  agents::RandomPolicy random;
  long used = 0;
  const auto log = collect(sim, random, c, 0, 0, Phase::log, 25, 0.0, used);
  const auto path = tmp("mbcal_static_log.jsonl");
  data::save_dataset(path, log);
  c.log_path = path.string();
  const auto from_file = run_experiment(c);
  for (const auto& m : from_file.rows) CHECK(m.train_sessions == 25u);
  CHECK(from_file.expected_interactions == 2 * 2 * 20 * 5);

  c.log_path = tmp("mbcal_missing_log.jsonl").string();
  std::filesystem::remove(c.log_path);
  CHECK_THROWS(run_experiment(c));
}

TEST_CASE("growing batch protocol") {
  auto c = tiny_config();
  c.agents = {AgentKind::mbcal, AgentKind::dqn};
  std::vector<RoundMetrics> seen;
  RunObserver obs;
  obs.on_round = [&](const RoundMetrics& m) { seen.push_back(m); };
  const auto r = run_growing_batch_rl(c, obs);
  REQUIRE(r.rows.size() == 2u * 2u * 2u);  // agents x replicates x rounds
  CHECK(seen.size() == r.rows.size());
  CHECK(r.interactions == r.expected_interactions);
  CHECK(r.expected_interactions == 2L * 2 * 2 * (40 + 20) * 5);
  for (const auto& m : r.rows) CHECK(m.train_sessions == static_cast<std::size_t>(40 * m.round));

  SUBCASE("per-round training with warm start") {
    c.pool_rounds = false;
    c.warm_start = true;
    for (const auto& m : run_growing_batch_rl(c).rows) CHECK(m.train_sessions == 40u);
  }
  SUBCASE("a single round is Batch-RL on a self-collected random log") {
    c.rounds = 1;
    c.replicates = 1;
    c.agents = {AgentKind::mbcal};
    const auto one = run_growing_batch_rl(c);
    const sim::Simulator sim(c.simulator_config());
    agents::RandomPolicy random;
    long used = 0;
    const auto log = collect(sim, random, c, 0, 1, Phase::train, c.train_sessions, 0.0, used);
    const auto agent = train_agent(AgentKind::mbcal, log, c, derive_seed(c.seeds.agent, {0, 1}));
    const auto test = collect(sim, *agent.policy, c, 0, 1, Phase::test, c.test_sessions, 0.0, used);
    REQUIRE(one.rows.size() == 1u);
    CHECK(one.rows[0].avg_reward == average_reward_per_session(test));
  }
}

TEST_CASE("mse analysis") {
  auto c = tiny_config();
  c.agents = {AgentKind::mbcal, AgentKind::mcpe};
  const auto rows = mse_analysis(c);
  REQUIRE(rows.size() == 4u);
  CHECK(rows[0].agent == "mbcal");
  CHECK(rows[3].agent == "mcpe");
  for (const auto& r : rows) CHECK(std::isfinite(r.mse));
  const auto path = tmp("mbcal_mse.csv");
  emit_mse(path, rows);
  CHECK(slurp(path).rfind("agent,seed,mse_objective\n", 0) == 0);
}
