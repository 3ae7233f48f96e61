#include "mbcal/harness/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "mbcal/data/dataset_io.hpp"
#include "mbcal/error.hpp"
#include "mbcal/seed.hpp"

namespace mbcal::harness {

namespace {

enum Component : std::uint64_t { kMem = 1, kFam = 2, kQ = 3 };

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NonFiniteError("non-finite " + what);
}

bool explores(AgentKind kind) { return kind != AgentKind::gru4rec; }

std::uint64_t agent_seed(const ExperimentConfig& c, int replicate, int round) {
  return derive_seed(c.seeds.agent, {static_cast<std::uint64_t>(replicate), static_cast<std::uint64_t>(round)});
}

data::Dataset empty_dataset(const sim::Simulator& sim) { return data::Dataset{sim.space(), sim.horizon(), {}}; }

}  // namespace

double average_reward_per_session(const data::Dataset& testset) {
  if (testset.empty()) throw std::invalid_argument("average_reward_per_session: empty test set");
  double total = 0.0;
  for (const auto& t : testset.trajectories) total += t.total_reward(testset.space);
  return total / static_cast<double>(testset.size());
}

MbcalUpdate policy_update_mbcal(const data::Dataset& dataset, const ExperimentConfig& config,
                                model::LabelMode mode, std::uint64_t seed, const model::Mem* mem_init,
                                const model::Fam* fam_init) {
  if (dataset.empty()) throw std::invalid_argument("policy update: empty dataset");
  MbcalUpdate out;
  auto mem = model::train_mem(dataset, config.mem_config(derive_seed(seed, {kMem})), mem_init);
  out.mem_curve = std::move(mem.loss_curve);
  auto mem_ptr = std::make_shared<model::Mem>(std::move(mem.model));
  out.labels = model::build_cfa_labels(*mem_ptr, dataset, config.gamma, mode);
  auto fam = model::train_fam(dataset, out.labels, config.fam_config(derive_seed(seed, {kFam})), fam_init);
  out.fam_curve = std::move(fam.loss_curve);
  out.mem = std::move(mem_ptr);
  out.fam = std::make_shared<model::Fam>(std::move(fam.model));
  return out;
}

namespace {

agents::QTarget q_target_of(AgentKind kind) {
  switch (kind) {
    case AgentKind::dqn: return agents::QTarget::dqn;
    case AgentKind::ddqn: return agents::QTarget::ddqn;
    case AgentKind::mcpe: return agents::QTarget::mcpe;
    default: throw std::logic_error("not a value-based agent");
  }
}

}  // namespace

TrainedAgent train_agent(AgentKind kind, const data::Dataset& dataset, const ExperimentConfig& config,
                         std::uint64_t seed, const TrainedAgent* previous) {
  if (previous && previous->kind != kind) throw std::invalid_argument("warm start from a different agent kind");
  TrainedAgent out;
  out.kind = kind;
  const std::string name = to_string(kind);
  switch (kind) {
    case AgentKind::mbcal:
    case AgentKind::mbcal_sfr: {
      const auto mode = kind == AgentKind::mbcal ? model::LabelMode::cfa : model::LabelMode::sfr;
      auto u = policy_update_mbcal(dataset, config, mode, seed, previous ? previous->mem.get() : nullptr,
                                   previous ? previous->fam.get() : nullptr);
      out.mem = u.mem;
      out.fam = u.fam;
      out.curves = {{"mem", std::move(u.mem_curve)}, {"fam", std::move(u.fam_curve)}};
      out.policy = std::make_shared<agents::MbcalPolicy>(out.mem, out.fam, name);
      break;
    }
    case AgentKind::gru4rec:
    case AgentKind::gru4rec_eps: {
      auto cfg = config.mem_config(derive_seed(seed, {kMem}));
      cfg.p_mask = 0.0;
      auto res = model::train_mem(dataset, cfg, previous ? previous->mem.get() : nullptr);
      out.curves = {{"mem", std::move(res.loss_curve)}};
      out.mem = std::make_shared<model::Mem>(std::move(res.model));
      out.policy = std::make_shared<agents::MbcalPolicy>(out.mem, nullptr, name);
      break;
    }
    case AgentKind::dqn:
    case AgentKind::ddqn:
    case AgentKind::mcpe: {
      auto res = agents::train_q(dataset, config.q_config(q_target_of(kind), derive_seed(seed, {kQ})),
                                 previous ? previous->q.get() : nullptr);
      out.curves = {{"q", std::move(res.loss_curve)}};
      out.q = std::make_shared<model::SequenceNet>(std::move(res.net));
      out.policy = std::make_shared<agents::QPolicy>(out.q, name);
      break;
    }
  }
  return out;
}

void save_agent(const std::filesystem::path& dir, const TrainedAgent& agent) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta = {{"format", "mbcal-agent"}, {"version", 1}, {"kind", to_string(agent.kind)}};
  if (agent.mem) nn::save_checkpoint(dir / "mem.json", agent.mem->net().params());
  if (agent.fam) nn::save_checkpoint(dir / "fam.json", agent.fam->net().params());
  if (agent.q) nn::save_checkpoint(dir / "q.json", agent.q->params());
  std::ofstream out(dir / "agent.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "agent.json").string());
  out << meta.dump(2) << '\n';
}

TrainedAgent load_agent(const std::filesystem::path& dir, const ExperimentConfig& config) {
  std::ifstream in(dir / "agent.json");
  if (!in) throw std::runtime_error("no agent.json in " + dir.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("agent.json: ") + e.what());
  }
  if (meta.value("format", "") != "mbcal-agent" || meta.value("version", 0) != 1) {
    throw FormatError("agent.json: unsupported format or version");
  }
  TrainedAgent a;
  a.kind = agent_kind_from_string(meta.at("kind").get<std::string>());
  const std::string name = to_string(a.kind);
  const auto enc = config.encoder();
  switch (a.kind) {
    case AgentKind::mbcal:
    case AgentKind::mbcal_sfr:
    case AgentKind::gru4rec:
    case AgentKind::gru4rec_eps: {
      auto mem = std::make_shared<model::Mem>(enc, config.simulator.space, 0);
      nn::load_checkpoint(dir / "mem.json", mem->net().params());
      a.mem = mem;
      if (a.kind == AgentKind::mbcal || a.kind == AgentKind::mbcal_sfr) {
        auto fam = std::make_shared<model::Fam>(enc, 0);
        nn::load_checkpoint(dir / "fam.json", fam->net().params());
        a.fam = fam;
      }
      a.policy = std::make_shared<agents::MbcalPolicy>(a.mem, a.fam, name);
      break;
    }
    default: {
      auto q = std::make_shared<model::SequenceNet>(enc, 1, 0);
      nn::load_checkpoint(dir / "q.json", q->params());
      a.q = q;
      a.policy = std::make_shared<agents::QPolicy>(a.q, name);
    }
  }
  return a;
}

double objective_mse(const TrainedAgent& agent, const data::Dataset& log, const ExperimentConfig& config) {
  if (log.empty()) throw std::invalid_argument("objective_mse: empty log");
  switch (agent.kind) {
    case AgentKind::mbcal:
    case AgentKind::mbcal_sfr: {
      const auto mode = agent.kind == AgentKind::mbcal ? model::LabelMode::cfa : model::LabelMode::sfr;
      const auto labels = model::build_cfa_labels(*agent.mem, log, config.gamma, mode);
      return model::fam_mse(*agent.fam, log, labels);
    }
    case AgentKind::gru4rec:
    case AgentKind::gru4rec_eps: {
      double total = 0.0;
      for (const auto& t : log.trajectories) {
        const auto rhat = model::step_expected_rewards(*agent.mem, t);
        double se = 0.0;
        for (std::size_t k = 0; k < rhat.size(); ++k) {
          const double err = rhat[k] - data::reward_of(t.steps[k].behavior, log.space);
          se += err * err;
        }
        total += se / static_cast<double>(rhat.size());
      }
      return total / static_cast<double>(log.size());
    }
    default:
      return agents::q_objective_mse(*agent.q, log, config.q_config(q_target_of(agent.kind), 0));
  }
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::log: return "log";
    case Phase::train: return "train";
    case Phase::test: return "test";
    case Phase::holdout: return "holdout";
  }
  return "?";
}

void ProvenanceLedger::record_training(const data::Dataset& d) {
  for (const auto& t : d.trajectories) training_.insert(t.id);
}

void ProvenanceLedger::record_test(const data::Dataset& d) {
  for (const auto& t : d.trajectories) test_.insert(t.id);
}

void ProvenanceLedger::check() const {
  for (const auto& id : test_) {
    if (training_.count(id)) throw ProtocolError("test trajectory '" + id + "' entered a training buffer");
  }
}

data::Dataset collect(const sim::Simulator& sim, const agents::Policy& policy, const ExperimentConfig& config,
                      int replicate, int round, Phase phase, int n, double epsilon, long& interactions,
                      const std::string& owner) {
  const auto r = static_cast<std::uint64_t>(replicate);
  const auto k = static_cast<std::uint64_t>(round);
  const auto ph = static_cast<std::uint64_t>(phase);
  nn::Rng explore(derive_seed(config.seeds.exploration, {r, ph, k}));
  data::Dataset out = empty_dataset(sim);
  out.trajectories.reserve(static_cast<std::size_t>(n));
  const std::string prefix = (owner.empty() ? "" : owner + "/") + "s" + std::to_string(replicate) + "-" + to_string(phase) + "-r" + std::to_string(round) + "-";
  for (int i = 0; i < n; ++i) {
    const auto session_seed = derive_seed(config.seeds.simulator, {r, ph, k, static_cast<std::uint64_t>(i)});
    auto traj = sim::run_session(sim, policy, session_seed, explore, epsilon);
    traj.id = prefix + std::to_string(i);
    traj.round = round;
    interactions += traj.horizon();
    out.trajectories.push_back(std::move(traj));
  }
  return out;
}

namespace {

RoundMetrics evaluate_round(const TrainedAgent& agent, const data::Dataset& test, const ExperimentConfig& config,
                            int replicate, int round, std::size_t train_sessions, long interactions) {
  RoundMetrics m;
  m.agent = to_string(agent.kind);
  m.seed = replicate;
  m.round = round;
  m.avg_reward = average_reward_per_session(test);
  m.mse_objective = objective_mse(agent, test, config);
  m.train_sessions = train_sessions;
  m.interactions = interactions;
  const std::string where = " (agent " + m.agent + ", seed " + std::to_string(replicate) + ", round " +
                            std::to_string(round) + ")";
  require_finite(m.avg_reward, "average reward" + where);
  require_finite(m.mse_objective, "objective MSE" + where);
  return m;
}

void finish(ExperimentResult& result) {
  result.ledger.check();
  if (result.interactions != result.expected_interactions) {
    throw ProtocolError("interaction budget mismatch: used " + std::to_string(result.interactions) +
                        ", configured " + std::to_string(result.expected_interactions));
  }
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

ExperimentResult run_batch_rl(const ExperimentConfig& config, const RunObserver& observer) {
  config.validate();
  const sim::Simulator sim(config.simulator_config());
  ExperimentResult result;
  const long T = sim.horizon();

  std::vector<data::Dataset> logs;
  if (!config.log_path.empty()) {
    auto log = data::load_dataset(config.log_path);
    if (log.empty()) throw std::invalid_argument("static log " + config.log_path + " is empty");
    if (!(log.space == sim.space()) || log.horizon != sim.horizon()) {
      throw ProtocolError("static log does not match the simulator's behavior space or horizon");
    }
    logs.assign(static_cast<std::size_t>(config.replicates), log);
  } else {
    agents::RandomPolicy random;
    for (int r = 0; r < config.replicates; ++r) {
      logs.push_back(collect(sim, random, config, r, 0, Phase::log, config.train_sessions, 0.0, result.interactions));
    }
    result.expected_interactions += static_cast<long>(config.replicates) * config.train_sessions * T;
  }

  for (auto kind : config.agents) {
    for (int r = 0; r < config.replicates; ++r) {
      const auto start = Clock::now();
      const auto& log = logs[static_cast<std::size_t>(r)];
      result.ledger.record_training(log);
      const auto agent = train_agent(kind, log, config, agent_seed(config, r, 1));
      long used = 0;
      const auto test = collect(sim, *agent.policy, config, r, 1, Phase::test, config.test_sessions, 0.0, used,
                                to_string(kind));
      result.ledger.record_test(test);
      result.interactions += used;
      result.expected_interactions += static_cast<long>(config.test_sessions) * T;
      auto m = evaluate_round(agent, test, config, r, 1, log.size(), used);
      m.wall_seconds = seconds_since(start);
      if (observer.on_round) observer.on_round(m);
      result.rows.push_back(std::move(m));
    }
  }
  finish(result);
  return result;
}

ExperimentResult run_growing_batch_rl(const ExperimentConfig& config, const RunObserver& observer) {
  config.validate();
  const sim::Simulator sim(config.simulator_config());
  ExperimentResult result;
  const long T = sim.horizon();
  const auto random = std::make_shared<agents::RandomPolicy>();

  for (auto kind : config.agents) {
    for (int r = 0; r < config.replicates; ++r) {
      data::Dataset pool = empty_dataset(sim);
      std::shared_ptr<const agents::Policy> behavior = random;
      std::optional<TrainedAgent> previous;
      long used = 0;
      for (int round = 1; round <= config.rounds; ++round) {
        const auto start = Clock::now();
        const double eps = (round > 1 && explores(kind)) ? config.epsilon : 0.0;
        auto batch = collect(sim, *behavior, config, r, round, Phase::train, config.train_sessions, eps, used,
                             to_string(kind));
        if (!config.pool_rounds) pool.trajectories.clear();
        for (auto& t : batch.trajectories) pool.trajectories.push_back(std::move(t));
        result.ledger.record_training(pool);

        auto agent = train_agent(kind, pool, config, agent_seed(config, r, round),
                                 config.warm_start && previous ? &*previous : nullptr);
        const auto test = collect(sim, *agent.policy, config, r, round, Phase::test, config.test_sessions, 0.0,
                                  used, to_string(kind));
        result.ledger.record_test(test);

        auto m = evaluate_round(agent, test, config, r, round, pool.size(), used);
        m.wall_seconds = seconds_since(start);
        if (observer.on_round) observer.on_round(m);
        result.rows.push_back(std::move(m));
        behavior = agent.policy;
        previous = std::move(agent);
      }
      result.interactions += used;
      result.expected_interactions +=
          static_cast<long>(config.rounds) * (config.train_sessions + config.test_sessions) * T;
    }
  }
  finish(result);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunObserver& observer) {
  return config.protocol == Protocol::batch ? run_batch_rl(config, observer)
                                            : run_growing_batch_rl(config, observer);
}

std::vector<MseRow> mse_analysis(const ExperimentConfig& config) {
  config.validate();
  const sim::Simulator sim(config.simulator_config());
  agents::RandomPolicy random;
  ProvenanceLedger ledger;
  long used = 0;
  std::vector<data::Dataset> logs, holdouts;
  for (int r = 0; r < config.replicates; ++r) {
    logs.push_back(collect(sim, random, config, r, 0, Phase::log, config.train_sessions, 0.0, used));
    holdouts.push_back(collect(sim, random, config, r, 0, Phase::holdout, config.test_sessions, 0.0, used));
    ledger.record_training(logs.back());
    ledger.record_test(holdouts.back());
  }
  ledger.check();
  std::vector<MseRow> rows;
  for (auto kind : config.agents) {
    for (int r = 0; r < config.replicates; ++r) {
      const auto& log = logs[static_cast<std::size_t>(r)];
      const auto agent = train_agent(kind, log, config, agent_seed(config, r, 1));
      MseRow row{to_string(kind), r, objective_mse(agent, holdouts[static_cast<std::size_t>(r)], config)};
      require_finite(row.mse, "objective MSE for " + row.agent);
      rows.push_back(row);
    }
  }
  return rows;
}

void emit_metrics(const std::filesystem::path& path, const std::vector<RoundMetrics>& rows, bool append) {
  bool write_header = true;
  if (append && std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != kMetricsHeader) throw FormatError("existing metrics file has a different header", 1);
    write_header = false;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics " + path.string());
  if (write_header) out << kMetricsHeader << '\n';
  for (const auto& m : rows) {
    out << m.agent << ',' << m.seed << ',' << m.round << ',' << format_double(m.avg_reward) << ','
        << format_double(m.mse_objective) << ',' << m.train_sessions << ',' << m.interactions << '\n';
  }
  if (!out) throw std::runtime_error("error writing metrics " + path.string());
}

void emit_mse(const std::filesystem::path& path, const std::vector<MseRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "agent,seed,mse_objective\n";
  for (const auto& r : rows) out << r.agent << ',' << r.seed << ',' << format_double(r.mse) << '\n';
  if (!out) throw std::runtime_error("error writing " + path.string());
}

}  // namespace mbcal::harness
