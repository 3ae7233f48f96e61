#include <doctest.h>

#include <cmath>
#include <memory>

#include "mbcal/agents/mbcal_policy.hpp"
#include "mbcal/agents/q_learning.hpp"
#include "mbcal/error.hpp"
#include "mbcal/seed.hpp"
#include "mbcal/sim/simulator.hpp"
#include "toy_mdp.hpp"
#include "toy_mem.hpp"

using namespace mbcal;
using namespace mbcal::agents;
using model::SequenceNet;

namespace {

/// Scalar net with q(a) = w * tanh(e[a]) + b for the first step of any session.
SequenceNet scalar_table(const std::vector<double>& e, double w = 1.0, double b = 0.0) {
  model::EncoderConfig enc;
  enc.num_items = static_cast<int>(e.size());
  enc.num_behaviors = 2;
  enc.embed_size = 1;
  enc.hidden_size = 1;
  enc.mlp_hidden = 0;
  enc.user_embedding = false;
  SequenceNet net(enc, 1, 1);
  auto& p = net.params();
  for (auto& blk : p) blk.value.setZero();
  for (std::size_t i = 0; i < e.size(); ++i) p.find("item_emb")->value(static_cast<Eigen::Index>(i), 0) = e[i];
  p.find("gru.w_input")->value(2, 1) = 1.0;
  p.find("gru.bias")->value(0, 0) = 40.0;
  p.find("gru.bias")->value(1, 0) = 40.0;
  p.find("head.0.weight")->value(0, 0) = w;
  p.find("head.0.bias")->value(0, 0) = b;
  return net;
}

model::EncoderConfig small_encoder(int users, int items, int behaviors) {
  model::EncoderConfig e;
  e.num_users = users;
  e.num_items = items;
  e.num_behaviors = behaviors;
  e.embed_size = 8;
  e.hidden_size = 8;
  e.mlp_hidden = 16;
  return e;
}

}  // namespace

TEST_CASE("greedy selection") {
  const std::vector<double> s{1, 3, 2};
  CHECK(greedy_select(s) == 1);
  const std::vector<double> tied{4, 4, 4};
  CHECK(greedy_select(tied) == 0);
  CHECK_THROWS(greedy_select(std::vector<double>{}));
  nn::Rng rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(7), scaled(7), shifted(7);
    const double c = 0.01 + std::abs(u(rng));
    const double k = u(rng);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = u(rng);
      scaled[i] = c * v[i];
      shifted[i] = v[i] + k;
    }
    CHECK(greedy_select(v) == greedy_select(scaled));
    CHECK(greedy_select(v) == greedy_select(shifted));
  }
}

TEST_CASE("epsilon greedy") {
  nn::Rng rng(2);
  for (int i = 0; i < 1000; ++i) CHECK(epsilon_greedy(3, 10, 0.0, rng) == 3);
  CHECK_THROWS(epsilon_greedy(0, 10, 1.5, rng));
  CHECK_THROWS(epsilon_greedy(0, 10, -0.1, rng));

  SUBCASE("epsilon = 1 is uniform") {
    const int k = 10, draws = 10000;
    std::vector<int> counts(k, 0);
    for (int i = 0; i < draws; ++i) ++counts[epsilon_greedy(0, k, 1.0, rng)];
    double chi2 = 0.0;
    const double expected = static_cast<double>(draws) / k;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 21.666);  // 99th percentile of chi-square with 9 degrees of freedom
  }
  SUBCASE("epsilon = 0.1 keeps the greedy choice 0.9 + 0.1 / k of the time") {
    const int k = 10, draws = 100000;
    int greedy = 0;
    for (int i = 0; i < draws; ++i) greedy += epsilon_greedy(4, k, 0.1, rng) == 4;
    CHECK(std::abs(static_cast<double>(greedy) / draws - (0.9 + 0.1 / k)) < 0.01);
  }
}

TEST_CASE("mbcal scoring") {
  const std::vector<std::pair<double, double>> parts{{1, 0}, {0, 2}, {0.5, 0.5}};
  std::vector<double> scores;
  for (auto [r, g] : parts) scores.push_back(mbcal_score(r, g));
  CHECK(greedy_select(scores) == 1);
  CHECK(scores[1] == 2.0);

  model::Mem mem(small_encoder(3, 6, 3), data::BehaviorSpace({0, 1, 2}), 4);
  model::Fam fam(small_encoder(3, 6, 3), 5);
  nn::Rng rng(3);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  for (auto* p : {&mem.net().params(), &fam.net().params()}) {
    for (auto& b : *p) {
      for (Eigen::Index i = 0; i < b.value.size(); ++i) b.value.data()[i] = u(rng);
    }
  }
  const std::vector<data::Step> prefix{{2, 1, false}, {4, 0, false}};
  const std::vector<int> cands{0, 1, 3, 5};

  SUBCASE("scores are expected reward plus future advantage") {
    auto mem_p = std::make_shared<model::Mem>(mem);
    auto fam_p = std::make_shared<model::Fam>(fam);
    MbcalPolicy policy(mem_p, fam_p);
    const auto s = score_after(policy, 1, prefix, cands);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const double want = mem.expected_reward(1, prefix, cands[i]) + fam.value(1, prefix, cands[i]);
      CHECK(std::abs(s[i] - want) < 1e-12);
    }
    // Session scores do not depend on earlier scoring calls.
    auto session = policy.begin(1);
    for (const auto& st : prefix) {
      session->score(cands);
      session->observe(st.action, st.behavior);
    }
    CHECK(session->score(cands) == s);
  }
  SUBCASE("zero FAM reduces to the expected instant reward") {
    auto zero = fam;
    for (auto& b : zero.net().params()) {
      if (b.name.rfind("head.1", 0) == 0) b.value.setZero();
    }
    MbcalPolicy with_zero(std::make_shared<model::Mem>(mem), std::make_shared<model::Fam>(zero));
    MbcalPolicy gru4rec(std::make_shared<model::Mem>(mem), nullptr, "gru4rec");
    CHECK(score_after(with_zero, 0, prefix, cands) == score_after(gru4rec, 0, prefix, cands));
  }
  SUBCASE("a constant FAM shift leaves the greedy choice unchanged") {
    auto shifted = fam;
    shifted.net().params().find("head.1.bias")->value(0, 0) += 3.7;
    MbcalPolicy a(std::make_shared<model::Mem>(mem), std::make_shared<model::Fam>(fam));
    MbcalPolicy b(std::make_shared<model::Mem>(mem), std::make_shared<model::Fam>(shifted));
    for (int user = 0; user < 3; ++user) {
      CHECK(greedy_select(score_after(a, user, prefix, cands)) == greedy_select(score_after(b, user, prefix, cands)));
    }
  }
  SUBCASE("action-blind MEM leaves the ranking to the FAM") {
    auto blind = mem;
    for (auto& b : blind.net().params()) {
      if (b.name.rfind("head.", 0) == 0) b.value.setZero();
    }
    MbcalPolicy policy(std::make_shared<model::Mem>(blind), std::make_shared<model::Fam>(fam));
    std::vector<double> g;
    for (int a : cands) g.push_back(fam.value(2, prefix, a));
    CHECK(greedy_select(score_after(policy, 2, prefix, cands)) == greedy_select(g));
  }
}

TEST_CASE("gru4rec picks the higher expected reward") {
  testing::ToyMem toy;
  toy.w = 40.0;
  toy.item_values = {-1.0, 1.0, 0.0};
  auto mem = toy.build();
  // Rewards 1 and 5 in place of 0 and 4.
  model::Mem rated(mem.net().config(), data::BehaviorSpace({1.0, 5.0}), 1);
  rated.net().params().copy_values_from(mem.net().params());
  MbcalPolicy policy(std::make_shared<model::Mem>(rated), nullptr, "gru4rec");
  const std::vector<int> both{0, 1};
  const auto s = score_after(policy, 0, {}, both);
  CHECK(std::abs(s[0] - 1.0) < 1e-9);
  CHECK(std::abs(s[1] - 5.0) < 1e-9);
  nn::Rng rng(1);
  auto session = policy.begin(0);
  CHECK(act(*session, both, rng, 0.0) == 1);
  const std::vector<int> single{0};
  CHECK(act(*session, single, rng, 0.0) == 0);
}

TEST_CASE("every policy picks from the candidate set") {
  sim::SimConfig cfg;
  cfg.num_items = 25;
  cfg.num_users = 4;
  cfg.horizon = 8;
  cfg.candidates = 6;
  const sim::Simulator sim(cfg);
  const auto enc = small_encoder(4, 25, 6);
  auto mem = std::make_shared<model::Mem>(enc, sim.space(), 1);
  auto fam = std::make_shared<model::Fam>(enc, 2);
  auto q = std::make_shared<SequenceNet>(enc, 1, 3);
  std::vector<std::unique_ptr<Policy>> policies;
  policies.push_back(std::make_unique<RandomPolicy>());
  policies.push_back(std::make_unique<MbcalPolicy>(mem, fam));
  policies.push_back(std::make_unique<MbcalPolicy>(mem, nullptr, "gru4rec"));
  policies.push_back(std::make_unique<QPolicy>(q, "dqn"));
  nn::Rng explore(5);
  for (const auto& p : policies) {
    for (int i = 0; i < 10; ++i) {
      for (double eps : {0.0, 0.1}) {
        const auto traj = sim::run_session(sim, *p, derive_seed(1, {std::uint64_t(i)}), explore, eps);
        for (std::size_t t = 0; t < traj.steps.size(); ++t) {
          const auto& c = traj.candidates[t];
          CHECK(std::find(c.begin(), c.end(), traj.steps[t].action) != c.end());
        }
      }
      if (p->name() != "random") {
        nn::Rng r1(0), r2(0);
        CHECK(sim::run_session(sim, *p, 17, r1, 0.0) == sim::run_session(sim, *p, 17, r2, 0.0));
      }
    }
  }
}

TEST_CASE("Monte Carlo targets") {
  const data::BehaviorSpace space({0, 1, 2, 3});
  data::Trajectory t;
  t.steps = {{0, 1, false}, {1, 2, false}, {2, 3, false}};
  CHECK(mcpe_targets(t, space, false) == std::vector<double>{6, 6, 6});
  CHECK(mcpe_targets(t, space, true) == std::vector<double>{6, 5, 3});
  for (auto& s : t.steps) s.behavior = 0;
  CHECK(mcpe_targets(t, space, false) == std::vector<double>{0, 0, 0});
  CHECK_THROWS(mcpe_targets(data::Trajectory{}, space, false));
}

TEST_CASE("discounted returns") {
  const data::BehaviorSpace space({0, 1, 2, 3});
  data::Trajectory t;
  t.steps = {{0, 1, false}, {1, 2, false}, {2, 3, false}};
  const auto g = discounted_returns(t, space, 0.5);
  CHECK(g[2] == 3.0);
  CHECK(g[1] == 2.0 + 0.5 * 3.0);
  CHECK(g[0] == 1.0 + 0.5 * 2.0 + 0.25 * 3.0);
  CHECK(discounted_returns(t, space, 1.0) == mcpe_targets(t, space, true));
}

TEST_CASE("value backup targets") {
  const auto space = testing::ToyMdp::space();
  auto ds = testing::ToyMdp::dataset();
  QConfig cfg;
  cfg.encoder = small_encoder(2, 3, 3);
  cfg.gamma = 0.9;

  SUBCASE("terminal steps use the reward alone") {
    QLearner learner(cfg, space);
    data::Trajectory one = ds.trajectories[4];
    one.steps.resize(1);
    one.candidates.resize(1);
    CHECK(learner.targets(one) == std::vector<double>{space.rewards()[static_cast<std::size_t>(one.steps[0].behavior)]});
    const auto y = learner.targets(ds.trajectories[4]);
    CHECK(y[1] == space.rewards()[static_cast<std::size_t>(ds.trajectories[4].steps[1].behavior)]);
  }
  SUBCASE("gamma = 0 gives instant rewards") {
    cfg.gamma = 0.0;
    QLearner learner(cfg, space);
    for (const auto& t : ds.trajectories) {
      const auto y = learner.targets(t);
      for (std::size_t k = 0; k < y.size(); ++k) CHECK(y[k] == static_cast<double>(t.steps[k].behavior));
    }
  }
  SUBCASE("double Q equals DQN while online and target coincide") {
    QLearner dqn(cfg, space);
    cfg.target = QTarget::ddqn;
    QLearner ddqn(cfg, space);
    for (const auto& t : ds.trajectories) CHECK(dqn.targets(t) == ddqn.targets(t));
    // ...and again right after a sync.
    cfg.target_sync = 3;
    QLearner learner(cfg, space);
    std::vector<const data::Trajectory*> batch;
    for (const auto& t : ds.trajectories) batch.push_back(&t);
    for (int i = 0; i < 3; ++i) learner.update(batch);
    CHECK(learner.updates() == 3);
    for (std::size_t i = 0; i < learner.online().params().size(); ++i) {
      CHECK(learner.online().params()[i].value == learner.target().params()[i].value);
    }
    auto dqn_cfg = cfg;
    dqn_cfg.target = QTarget::dqn;
    QLearner same(dqn_cfg, space);
    same.online().params().copy_values_from(learner.online().params());
    same.sync_target();
    for (const auto& t : ds.trajectories) {
      const auto a = learner.targets(t), b = same.targets(t);
      for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-12);
    }
  }
  SUBCASE("target network lags the online network between syncs") {
    cfg.target_sync = 100;
    QLearner learner(cfg, space);
    std::vector<const data::Trajectory*> batch{&ds.trajectories[0], &ds.trajectories[1]};
    learner.update(batch);
    CHECK(learner.online().params()[0].value != learner.target().params()[0].value);
    CHECK_THROWS(learner.update(std::span<const data::Trajectory* const>{}));
  }
  SUBCASE("missing candidate sets are a protocol error") {
    QLearner learner(cfg, space);
    auto t = ds.trajectories[0];
    t.candidates.clear();
    CHECK_THROWS_AS(learner.targets(t), ProtocolError);
  }
}

TEST_CASE("double Q target on hand-set tables") {
  // online q = tanh(e): argmax is item 1; target q = tanh(e'): max is item 0.
  const auto online = scalar_table({0.1, 0.5, 0.3});
  const auto target = scalar_table({0.6, 0.2, 0.4});
  const std::vector<int> cands{0, 1, 2};
  const auto op = online.start(0), tp = target.start(0);
  const double gamma = 0.9, r = 1.5;
  CHECK(std::abs(ddqn_target(online, op, target, tp, cands, gamma, r) - (r + gamma * std::tanh(0.2))) < 1e-12);
  CHECK(std::abs(dqn_target(target, tp, cands, gamma, r) - (r + gamma * std::tanh(0.6))) < 1e-12);
  CHECK_THROWS(dqn_target(target, tp, std::vector<int>{}, gamma, r));
}

TEST_CASE("Monte Carlo regression onto a constant target") {
  // Every session has the same total reward, so the target is constant.
  data::Dataset ds{data::BehaviorSpace({0, 1, 2}), 4, {}};
  nn::Rng rng(6);
  for (int i = 0; i < 40; ++i) {
    data::Trajectory t;
    t.id = std::to_string(i);
    t.user = i % 3;
    for (int k = 0; k < 4; ++k) t.steps.push_back({static_cast<int>(rng() % 5), k % 2 == 0 ? 2 : 1, false});
    ds.trajectories.push_back(t);
  }
  QConfig cfg;
  cfg.encoder = small_encoder(3, 5, 3);
  cfg.target = QTarget::mcpe;
  cfg.epochs = 150;
  cfg.batch_size = 8;
  cfg.adam.learning_rate = 1e-2;
  const auto res = train_q(ds, cfg);
  for (const auto& t : ds.trajectories) {
    for (const auto& q : res.net.forward(t)) CHECK(std::abs(q[0] - 6.0) < 0.3);
  }
  CHECK(q_objective_mse(res.net, ds, cfg) < 0.09);
}

TEST_CASE("DQN on the enumerable toy MDP matches value iteration") {
  const auto ds = testing::ToyMdp::dataset();
  QConfig cfg;
  cfg.encoder = small_encoder(2, 3, 3);
  cfg.gamma = 0.9;
  cfg.epochs = 4000;
  cfg.batch_size = 18;
  cfg.target_sync = 100;
  cfg.adam.learning_rate = 3e-3;
  const auto res = train_q(ds, cfg);
  double worst = 0.0;
  for (const auto& t : ds.trajectories) {
    const auto q = res.net.forward(t);
    const int u = t.user, a0 = t.steps[0].action, a1 = t.steps[1].action;
    worst = std::max(worst, std::abs(q[0][0] - testing::ToyMdp::q_first(u, a0, cfg.gamma)));
    worst = std::max(worst, std::abs(q[1][0] - testing::ToyMdp::q_last(u, a0, a1)));
  }
  MESSAGE("toy MDP max |Q - Q*| = " << worst);
  CHECK(worst < 0.05);
}

TEST_CASE("centered output bias and per-epoch sampling") {
  auto ds = testing::ToyMdp::dataset();
  QConfig cfg;
  cfg.encoder = small_encoder(2, 3, 3);
  cfg.epochs = 0;
  cfg.center_output = true;
  cfg.target = QTarget::mcpe;
  double mc = 0.0;
  for (const auto& t : ds.trajectories) mc += mcpe_targets(t, ds.space, false)[0];
  CHECK(train_q(ds, cfg).net.params().find("head.1.bias")->value(0, 0) == doctest::Approx(mc / 18).epsilon(1e-12));
  cfg.target = QTarget::dqn;
  cfg.gamma = 0.5;
  double dr = 0.0;
  for (const auto& t : ds.trajectories) {
    for (double v : discounted_returns(t, ds.space, 0.5)) dr += v;
  }
  CHECK(train_q(ds, cfg).net.params().find("head.1.bias")->value(0, 0) == doctest::Approx(dr / 36).epsilon(1e-12));
  cfg.center_output = false;
  CHECK(train_q(ds, cfg).net.params().find("head.1.bias")->value(0, 0) == 0.0);

  cfg.epochs = 3;
  cfg.batch_size = 4;
  CHECK(train_q(ds, cfg).updates == 3 * 5);
  cfg.epoch_samples = 10;
  CHECK(train_q(ds, cfg).updates == 3 * 3);
  cfg.epoch_samples = 100;
  CHECK(train_q(ds, cfg).updates == 3 * 5);
}
