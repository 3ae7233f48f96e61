#include "mbcal/harness/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "mbcal/error.hpp"

namespace mbcal::harness {

using nlohmann::json;

std::string to_string(Protocol p) { return p == Protocol::batch ? "batch" : "growing-batch"; }

Protocol protocol_from_string(const std::string& s) {
  if (s == "batch") return Protocol::batch;
  if (s == "growing-batch") return Protocol::growing_batch;
  throw std::invalid_argument("unknown protocol '" + s + "' (expected batch or growing-batch)");
}

namespace {

const std::vector<std::pair<AgentKind, std::string>>& kind_names() {
  static const std::vector<std::pair<AgentKind, std::string>> names{
      {AgentKind::mbcal, "mbcal"},     {AgentKind::mbcal_sfr, "mbcal_sfr"},
      {AgentKind::gru4rec, "gru4rec"}, {AgentKind::gru4rec_eps, "gru4rec_eps"},
      {AgentKind::dqn, "dqn"},         {AgentKind::ddqn, "ddqn"},
      {AgentKind::mcpe, "mcpe"}};
  return names;
}

class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw std::invalid_argument(where_ + " must be a JSON object");
  }

  template <typename T>
  Reader& get(const char* key, T& field) {
    seen_.insert(key);
    if (!obj_.contains(key)) return *this;
    try {
      field = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(where_ + key + ": " + e.what());
    }
    return *this;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw std::invalid_argument("unknown config key '" + where_ + key + "'");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

json sim_to_json(const sim::SimConfig& c) {
  return {{"num_items", c.num_items},
          {"num_users", c.num_users},
          {"feature_size", c.feature_size},
          {"hidden_size", c.hidden_size},
          {"candidates", c.candidates},
          {"horizon", c.horizon},
          {"rewards", c.space.rewards()},
          {"temperature", c.temperature},
          {"user_bias_spread", c.user_bias_spread},
          {"recency_penalty", c.recency_penalty},
          {"recency_window", c.recency_window},
          {"preference_weight", c.preference_weight},
          {"appeal_weight", c.appeal_weight},
          {"engagement_weight", c.engagement_weight},
          {"engagement_input", c.engagement_input},
          {"engagement_decay", c.engagement_decay},
          {"readout_weight", c.readout_weight},
          {"sharpness", c.sharpness},
          {"curvature", c.curvature}};
}

sim::SimConfig sim_from_json(const json& j) {
  sim::SimConfig c;
  std::vector<double> rewards = c.space.rewards();
  Reader(j, "simulator.")
      .get("num_items", c.num_items)
      .get("num_users", c.num_users)
      .get("feature_size", c.feature_size)
      .get("hidden_size", c.hidden_size)
      .get("candidates", c.candidates)
      .get("horizon", c.horizon)
      .get("rewards", rewards)
      .get("temperature", c.temperature)
      .get("user_bias_spread", c.user_bias_spread)
      .get("recency_penalty", c.recency_penalty)
      .get("recency_window", c.recency_window)
      .get("preference_weight", c.preference_weight)
      .get("appeal_weight", c.appeal_weight)
      .get("engagement_weight", c.engagement_weight)
      .get("engagement_input", c.engagement_input)
      .get("engagement_decay", c.engagement_decay)
      .get("readout_weight", c.readout_weight)
      .get("sharpness", c.sharpness)
      .get("curvature", c.curvature)
      .finish();
  c.space = data::BehaviorSpace(rewards);
  return c;
}

json agent_to_json(const AgentSettings& a) {
  return {{"embed_size", a.embed_size},     {"hidden_size", a.hidden_size},
          {"mlp_hidden", a.mlp_hidden},     {"user_embedding", a.user_embedding},
          {"p_mask", a.p_mask},             {"resample_masks", a.resample_masks},
          {"mem_epochs", a.mem_epochs},     {"fam_epochs", a.fam_epochs},
          {"q_epochs", a.q_epochs},         {"batch_size", a.batch_size},
          {"learning_rate", a.learning_rate}, {"target_sync", a.target_sync},
          {"reward_to_go", a.reward_to_go}, {"epoch_samples", a.epoch_samples},
          {"center_outputs", a.center_outputs}};
}

AgentSettings agent_from_json(const json& j) {
  AgentSettings a;
  Reader(j, "agent.")
      .get("embed_size", a.embed_size)
      .get("hidden_size", a.hidden_size)
      .get("mlp_hidden", a.mlp_hidden)
      .get("user_embedding", a.user_embedding)
      .get("p_mask", a.p_mask)
      .get("resample_masks", a.resample_masks)
      .get("mem_epochs", a.mem_epochs)
      .get("fam_epochs", a.fam_epochs)
      .get("q_epochs", a.q_epochs)
      .get("batch_size", a.batch_size)
      .get("learning_rate", a.learning_rate)
      .get("target_sync", a.target_sync)
      .get("reward_to_go", a.reward_to_go)
      .get("epoch_samples", a.epoch_samples)
      .get("center_outputs", a.center_outputs)
      .finish();
  return a;
}

}  // namespace

std::string to_string(AgentKind k) {
  for (const auto& [kind, name] : kind_names()) {
    if (kind == k) return name;
  }
  return "?";
}

AgentKind agent_kind_from_string(const std::string& s) {
  for (const auto& [kind, name] : kind_names()) {
    if (name == s) return kind;
  }
  throw std::invalid_argument("unknown agent '" + s +
                              "' (expected mbcal, mbcal_sfr, gru4rec, gru4rec_eps, dqn, ddqn or mcpe)");
}

std::vector<AgentKind> all_agent_kinds() {
  std::vector<AgentKind> out;
  for (const auto& [kind, name] : kind_names()) out.push_back(kind);
  return out;
}

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("experiment config: " + what);
  };
  need(!agents.empty(), "agents must not be empty");
  need(rounds >= 1 && rounds <= 40, "rounds must lie in [1, 40]");
  need(train_sessions >= 1 || (protocol == Protocol::batch && !log_path.empty()),
       "train_sessions must be positive");
  need(test_sessions >= 1, "test_sessions must be positive");
  need(replicates >= 1, "replicates must be positive");
  need(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  need(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
  need(agent.embed_size >= 1 && agent.hidden_size >= 1 && agent.mlp_hidden >= 0, "bad model sizes");
  need(agent.p_mask >= 0.0 && agent.p_mask <= 1.0, "p_mask must lie in [0, 1]");
  need(agent.mem_epochs >= 0 && agent.fam_epochs >= 0 && agent.q_epochs >= 0, "epochs must be >= 0");
  need(agent.batch_size >= 1, "batch_size must be positive");
  need(agent.epoch_samples >= 0, "epoch_samples must be >= 0");
  need(agent.learning_rate > 0.0, "learning_rate must be positive");
  need(agent.target_sync >= 1, "target_sync must be positive");
  simulator_config().validate();
}

sim::SimConfig ExperimentConfig::simulator_config() const {
  sim::SimConfig c = simulator;
  c.seed = seeds.simulator;
  return c;
}

model::EncoderConfig ExperimentConfig::encoder() const {
  model::EncoderConfig e;
  e.num_users = simulator.num_users;
  e.num_items = simulator.num_items;
  e.num_behaviors = simulator.space.size();
  e.embed_size = agent.embed_size;
  e.hidden_size = agent.hidden_size;
  e.mlp_hidden = agent.mlp_hidden;
  e.user_embedding = agent.user_embedding;
  return e;
}

model::MemConfig ExperimentConfig::mem_config(std::uint64_t seed) const {
  model::MemConfig c;
  c.encoder = encoder();
  c.p_mask = agent.p_mask;
  c.resample_masks = agent.resample_masks;
  c.epochs = agent.mem_epochs;
  c.batch_size = agent.batch_size;
  c.epoch_samples = static_cast<std::size_t>(agent.epoch_samples);
  c.adam.learning_rate = agent.learning_rate;
  c.seed = seed;
  return c;
}

model::FamConfig ExperimentConfig::fam_config(std::uint64_t seed) const {
  model::FamConfig c;
  c.encoder = encoder();
  c.epochs = agent.fam_epochs;
  c.batch_size = agent.batch_size;
  c.epoch_samples = static_cast<std::size_t>(agent.epoch_samples);
  c.adam.learning_rate = agent.learning_rate;
  c.center_output = agent.center_outputs;
  c.seed = seed;
  return c;
}

agents::QConfig ExperimentConfig::q_config(agents::QTarget target, std::uint64_t seed) const {
  agents::QConfig c;
  c.encoder = encoder();
  c.target = target;
  c.reward_to_go = agent.reward_to_go;
  c.gamma = gamma;
  c.epochs = agent.q_epochs;
  c.batch_size = agent.batch_size;
  c.epoch_samples = static_cast<std::size_t>(agent.epoch_samples);
  c.target_sync = agent.target_sync;
  c.adam.learning_rate = agent.learning_rate;
  c.center_output = agent.center_outputs;
  c.seed = seed;
  return c;
}

json to_json(const ExperimentConfig& c) {
  std::vector<std::string> agents;
  for (auto k : c.agents) agents.push_back(to_string(k));
  return {{"protocol", to_string(c.protocol)},
          {"agents", agents},
          {"rounds", c.rounds},
          {"train_sessions", c.train_sessions},
          {"test_sessions", c.test_sessions},
          {"replicates", c.replicates},
          {"gamma", c.gamma},
          {"epsilon", c.epsilon},
          {"seeds", {{"simulator", c.seeds.simulator}, {"agent", c.seeds.agent}, {"exploration", c.seeds.exploration}}},
          {"pool_rounds", c.pool_rounds},
          {"warm_start", c.warm_start},
          {"log_path", c.log_path},
          {"simulator", sim_to_json(c.simulator)},
          {"agent", agent_to_json(c.agent)}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  std::string protocol = to_string(c.protocol);
  std::vector<std::string> agents;
  json seeds = json::object(), simulator = json::object(), agent = json::object();
  Reader(j, "")
      .get("protocol", protocol)
      .get("agents", agents)
      .get("rounds", c.rounds)
      .get("train_sessions", c.train_sessions)
      .get("test_sessions", c.test_sessions)
      .get("replicates", c.replicates)
      .get("gamma", c.gamma)
      .get("epsilon", c.epsilon)
      .get("seeds", seeds)
      .get("pool_rounds", c.pool_rounds)
      .get("warm_start", c.warm_start)
      .get("log_path", c.log_path)
      .get("simulator", simulator)
      .get("agent", agent)
      .finish();
  c.protocol = protocol_from_string(protocol);
  if (j.contains("agents")) {
    c.agents.clear();
    for (const auto& a : agents) c.agents.push_back(agent_kind_from_string(a));
  }
  Reader(seeds, "seeds.")
      .get("simulator", c.seeds.simulator)
      .get("agent", c.seeds.agent)
      .get("exploration", c.seeds.exploration)
      .finish();
  c.simulator = sim_from_json(simulator);
  c.agent = agent_from_json(agent);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what(), 0);
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config " + path.string());
  out << to_json(config).dump(2) << '\n';
}

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override '" + o + "' is not key=value");
    std::string pointer = "/" + o.substr(0, eq);
    for (auto& ch : pointer) {
      if (ch == '.') ch = '/';
    }
    const std::string text = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    doc[json::json_pointer(pointer)] = value;
  }
}

}  // namespace mbcal::harness
