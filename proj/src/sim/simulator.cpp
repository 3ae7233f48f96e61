#include "mbcal/sim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "mbcal/error.hpp"

namespace mbcal::sim {

namespace {

double centered(int n, int size) { return n - 0.5 * (size - 1); }

}  // namespace

void SimConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("simulator config: " + what);
  };
  need(num_items >= 1, "num_items must be positive");
  need(num_users >= 1, "num_users must be positive");
  need(feature_size >= 3, "feature_size must be at least 3");
  need(hidden_size >= 2, "hidden_size must be at least 2");
  need(candidates >= 2, "candidates must be at least 2");
  need(candidates <= num_items, "candidates exceeds catalog size");
  need(horizon >= 1, "horizon must be positive");
  need(space.size() >= 2, "behavior space needs at least two behaviors");
  need(temperature >= 0.0 && std::isfinite(temperature), "temperature must be finite and >= 0");
  need(user_bias_spread >= 0.0, "user_bias_spread must be >= 0");
  need(recency_window >= 0, "recency_window must be >= 0");
  need(engagement_decay > 0.0 && engagement_decay < 1.0, "engagement_decay must lie in (0, 1)");
}

int sample_behavior(const Vector& logits, double temperature, double bias, nn::Rng& rng) {
  if (logits.size() == 0) throw std::invalid_argument("sample_behavior: empty logits");
  const int n = static_cast<int>(logits.size());
  if (temperature == 0.0) {
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return static_cast<int>(best);
  }
  Vector z(n);
  for (int i = 0; i < n; ++i) z[i] = logits[i] / temperature + bias * centered(i, n);
  const Vector p = nn::softmax(z);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double draw = u(rng);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += p[i];
    if (draw < acc) return i;
  }
  return n - 1;
}

Simulator::Simulator(const SimConfig& config) : config_(config) {
  config_.validate();
  nn::Rng rng(config_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int F = config_.feature_size;
  const int H = config_.hidden_size;

  catalog_.features.resize(F, config_.num_items);
  for (int i = 0; i < config_.num_items; ++i) {
    for (int f = 0; f < F; ++f) catalog_.features(f, i) = normal(rng);
  }

  users_.resize(static_cast<std::size_t>(config_.num_users));
  const double pref_scale = 1.0 / std::sqrt(static_cast<double>(F - 2));
  for (auto& u : users_) {
    u.preference.resize(F - 2);
    for (int f = 0; f < F - 2; ++f) u.preference[f] = pref_scale * normal(rng);
    u.bias = config_.user_bias_spread * normal(rng);
  }

  lstm_ = nn::Lstm::create(params_, "user_lstm", F, H, rng);
  auto& wx = params_[lstm_.w_input].value;
  auto& wh = params_[lstm_.w_hidden].value;
  auto& b = params_[lstm_.bias].value;
  for (int k = 0; k < 4; ++k) {
    wx.row(k * H).setZero();
    wh.row(k * H).setZero();
  }
  b.setZero();
  for (int j = 1; j < H; ++j) b(H + j, 0) = 1.0;  // forget gates of the free units
  // Unit 0: fully open input and output gates, slow forget gate.
  b(0, 0) = 12.0;
  b(H, 0) = std::log(config_.engagement_decay / (1.0 - config_.engagement_decay));
  b(2 * H, 0) = 12.0;
  wx(3 * H, 0) = -config_.engagement_input;
  wx(3 * H, 1) = config_.engagement_input;

  readout_.resize(H - 1);
  const double readout_scale = config_.readout_weight / std::sqrt(static_cast<double>(H - 1));
  for (int j = 0; j < H - 1; ++j) readout_[j] = readout_scale * normal(rng);
}

Session Simulator::begin(std::uint64_t session_seed) const {
  nn::Rng pick(session_seed);
  std::uniform_int_distribution<int> user(0, config_.num_users - 1);
  return begin(user(pick), session_seed);
}

Session Simulator::begin(int user, std::uint64_t session_seed) const {
  if (user < 0 || user >= config_.num_users) {
    throw IndexError("user " + std::to_string(user) + " outside [0, " + std::to_string(config_.num_users) + ")");
  }
  Session s;
  s.user = user;
  s.state.h = Vector::Zero(config_.hidden_size);
  s.state.c = Vector::Zero(config_.hidden_size);
  s.candidate_rng.seed(session_seed ^ 0x5bd1e9955bd1e995ULL);
  s.behavior_rng.seed(session_seed ^ 0x2545f4914f6cdd1dULL);
  return s;
}

const std::vector<int>& Simulator::candidate_set(Session& session) const {
  if (session.step >= config_.horizon) throw StateError("session ended");
  if (!session.candidates_drawn) {
    // Partial Fisher-Yates over the catalog.
    std::vector<int> pool(static_cast<std::size_t>(config_.num_items));
    std::iota(pool.begin(), pool.end(), 0);
    const auto k = static_cast<std::size_t>(config_.candidates);
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(session.candidate_rng)]);
    }
    pool.resize(k);
    session.candidates = std::move(pool);
    session.candidates_drawn = true;
  }
  return session.candidates;
}

double Simulator::satisfaction(const Session& session, int action, const nn::Lstm::State& next) const {
  const auto f = catalog_.features.col(action);
  const auto& user = users_[static_cast<std::size_t>(session.user)];
  const int F = config_.feature_size;
  double s = config_.preference_weight * user.preference.dot(f.tail(F - 2));
  s += config_.appeal_weight * f[0];
  s += config_.engagement_weight * session.state.h[0];
  s += readout_.dot(next.h.tail(config_.hidden_size - 1));
  if (std::find(session.recent.begin(), session.recent.end(), action) != session.recent.end()) {
    s -= config_.recency_penalty;
  }
  return s;
}

Vector Simulator::logits(const Session& session, int action) const {
  if (action < 0 || action >= config_.num_items) {
    throw IndexError("item " + std::to_string(action) + " outside the catalog");
  }
  const Vector x = catalog_.features.col(action);
  const auto next = lstm_.step(params_, session.state, x);
  return ordinal_logits(satisfaction(session, action, next));
}

Vector Simulator::ordinal_logits(double s) const {
  const int n = config_.space.size();
  Vector out(n);
  for (int i = 0; i < n; ++i) {
    const double c = centered(i, n);
    out[i] = config_.sharpness * c * s - config_.curvature * c * c;
  }
  return out;
}

Vector Simulator::behavior_distribution(const Session& session, int action) const {
  const Vector l = logits(session, action);
  const int n = static_cast<int>(l.size());
  if (config_.temperature == 0.0) {
    Eigen::Index best = 0;
    l.maxCoeff(&best);
    Vector p = Vector::Zero(n);
    p[best] = 1.0;
    return p;
  }
  const double bias = users_[static_cast<std::size_t>(session.user)].bias;
  Vector z(n);
  for (int i = 0; i < n; ++i) z[i] = l[i] / config_.temperature + bias * centered(i, n);
  return nn::softmax(z);
}

double Simulator::expected_reward(const Session& session, int action) const {
  const Vector p = behavior_distribution(session, action);
  double r = 0.0;
  for (int i = 0; i < p.size(); ++i) r += p[i] * config_.space.rewards()[static_cast<std::size_t>(i)];
  return r;
}

void Simulator::check_action(const Session& session, int action) const {
  if (session.step >= config_.horizon) throw StateError("session ended after " + std::to_string(config_.horizon) + " steps");
  if (!session.candidates_drawn ||
      std::find(session.candidates.begin(), session.candidates.end(), action) == session.candidates.end()) {
    throw ProtocolError("item " + std::to_string(action) + " is not in the current candidate set");
  }
}

StepResult Simulator::step(Session& session, int action) const {
  check_action(session, action);
  const Vector x = catalog_.features.col(action);
  auto next = lstm_.step(params_, session.state, x);
  const Vector l = ordinal_logits(satisfaction(session, action, next));
  const double bias = users_[static_cast<std::size_t>(session.user)].bias;
  StepResult out;
  out.behavior = sample_behavior(l, config_.temperature, bias, session.behavior_rng);
  out.reward = data::reward_of(out.behavior, config_.space);

  session.state = std::move(next);
  if (config_.recency_window > 0) {
    session.recent.push_back(action);
    if (static_cast<int>(session.recent.size()) > config_.recency_window) session.recent.pop_front();
  }
  ++session.step;
  session.candidates_drawn = false;
  return out;
}

data::Trajectory run_session(const Simulator& sim, const agents::Policy& policy,
                             std::uint64_t session_seed, nn::Rng& explore_rng, double epsilon) {
  Session session = sim.begin(session_seed);
  auto ps = policy.begin(session.user);
  data::Trajectory traj;
  traj.user = session.user;
  traj.policy = policy.name();
  for (int t = 0; t < sim.horizon(); ++t) {
    const auto& cands = sim.candidate_set(session);
    traj.candidates.push_back(cands);
    const int action = agents::act(*ps, cands, explore_rng, epsilon);
    const auto res = sim.step(session, action);
    traj.steps.push_back({action, res.behavior, false});
    ps->observe(action, res.behavior);
  }
  return traj;
}

}  // namespace mbcal::sim
