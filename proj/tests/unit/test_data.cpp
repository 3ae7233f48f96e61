#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mbcal/data/dataset_io.hpp"
#include "mbcal/data/trajectory.hpp"
#include "mbcal/error.hpp"

using namespace mbcal;
using namespace mbcal::data;

namespace {

Trajectory make_traj(const std::string& id, int user, int T, int seed) {
  Trajectory t;
  t.id = id;
  t.user = user;
  t.policy = "random";
  t.round = seed % 3;
  for (int i = 0; i < T; ++i) {
    t.steps.push_back({(seed * 7 + i * 3) % 50, (seed + i) % 6, false});
    t.candidates.push_back({t.steps.back().action, (t.steps.back().action + 1) % 50});
  }
  return t;
}

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("reward map") {
  CHECK(reward_of(5, BehaviorSpace::ratings()) == 5.0);
  CHECK(reward_of(0, BehaviorSpace::ratings()) == 0.0);
  CHECK(reward_of(11, BehaviorSpace::dwell_levels()) == 12.0);
  CHECK_THROWS_AS(reward_of(6, BehaviorSpace::ratings()), IndexError);
  CHECK_THROWS_AS(reward_of(-1, BehaviorSpace::ratings()), IndexError);
  CHECK_THROWS(BehaviorSpace({1.0}));
}

TEST_CASE("mask positions") {
  Rng rng(1);
  const auto t = make_traj("a", 0, 20, 1);
  CHECK(mask_positions(t, 0.0, rng).empty());
  CHECK(mask_positions(t, 1.0, rng).size() == 20);
  CHECK_THROWS(mask_positions(t, 1.5, rng));

  double total = 0;
  const int trials = 100000;
  for (int i = 0; i < trials; ++i) total += static_cast<double>(mask_positions(t, 0.2, rng).size());
  CHECK(std::abs(total / trials - 4.0) < 0.05);

  Rng a(42), b(42);
  CHECK(mask_positions(t, 0.3, a) == mask_positions(t, 0.3, b));
}

TEST_CASE("apply mask") {
  const auto t = make_traj("a", 0, 4, 2);
  // Zero-based {1, 2} are the second and third steps.
  const auto m = apply_mask(t, {1, 2});
  CHECK_FALSE(m.steps[0].masked);
  CHECK(m.steps[1].masked);
  CHECK(m.steps[2].masked);
  CHECK_FALSE(m.steps[3].masked);
  for (int i = 0; i < 4; ++i) {
    CHECK(m.steps[i].action == t.steps[i].action);
    CHECK(m.steps[i].behavior == t.steps[i].behavior);
  }
  CHECK(apply_mask(t, {}) == t);
  CHECK(apply_mask(m, {1, 2}) == m);
  CHECK_THROWS_AS(apply_mask(t, {4}), IndexError);

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto src = make_traj("x", 1, 1 + trial % 20, trial);
    const auto pos = mask_positions(src, 0.4, rng);
    const auto out = apply_mask(src, pos);
    REQUIRE(out.horizon() == src.horizon());
    for (int i = 0; i < src.horizon(); ++i) {
      const bool expected = std::find(pos.begin(), pos.end(), i) != pos.end();
      CHECK(out.steps[i].masked == expected);
      CHECK(out.steps[i].action == src.steps[i].action);
      CHECK(out.steps[i].behavior == src.steps[i].behavior);
    }
    CHECK(out.candidates == src.candidates);
    CHECK(out.user == src.user);
  }
}

TEST_CASE("dataset round trip") {
  const auto path = tmp("mbcal_ds.jsonl");
  Dataset empty{BehaviorSpace::ratings(), 5, {}};
  save_dataset(path, empty);
  CHECK(load_dataset(path) == empty);

  Dataset one{BehaviorSpace::dwell_levels(), 5, {make_traj("s-1", 3, 5, 4)}};
  one.trajectories[0].steps[2].masked = true;
  save_dataset(path, one);
  CHECK(load_dataset(path) == one);

  Dataset no_candidates{BehaviorSpace::ratings(), 3, {make_traj("s-2", 0, 3, 5)}};
  no_candidates.trajectories[0].candidates.clear();
  save_dataset(path, no_candidates);
  CHECK(load_dataset(path) == no_candidates);
  std::filesystem::remove(path);
}

TEST_CASE("dataset files are append-safe") {
  const auto a = tmp("mbcal_a.jsonl"), b = tmp("mbcal_b.jsonl"), cat = tmp("mbcal_cat.jsonl");
  std::filesystem::remove(a);
  const std::vector<Trajectory> first{make_traj("r1-0", 0, 4, 1), make_traj("r1-1", 1, 4, 2)};
  const std::vector<Trajectory> second{make_traj("r2-0", 2, 4, 3)};
  append_dataset(a, BehaviorSpace::ratings(), 4, first);
  std::ifstream before(a);
  const std::string prefix((std::istreambuf_iterator<char>(before)), std::istreambuf_iterator<char>());
  append_dataset(a, BehaviorSpace::ratings(), 4, second);
  std::ifstream after(a);
  const std::string all((std::istreambuf_iterator<char>(after)), std::istreambuf_iterator<char>());
  CHECK(all.substr(0, prefix.size()) == prefix);
  CHECK(load_dataset(a).size() == 3);

  save_dataset(b, Dataset{BehaviorSpace::ratings(), 4, second});
  {
    std::ofstream out(cat);
    std::ifstream ia(a), ib(b);
    out << ia.rdbuf() << ib.rdbuf();
  }
  const auto joined = load_dataset(cat);
  CHECK(joined.size() == 4);
  CHECK(joined.trajectories[3] == second[0]);

  save_dataset(b, Dataset{BehaviorSpace::dwell_levels(), 4, second});
  {
    std::ofstream out(cat);
    std::ifstream ia(a), ib(b);
    out << ia.rdbuf() << ib.rdbuf();
  }
  CHECK_THROWS_AS(load_dataset(cat), FormatError);
  for (const auto& p : {a, b, cat}) std::filesystem::remove(p);
}

TEST_CASE("dataset format errors name the line") {
  const auto path = tmp("mbcal_bad.jsonl");
  save_dataset(path, Dataset{BehaviorSpace::ratings(), 4, {make_traj("ok", 0, 4, 1), make_traj("cut", 0, 4, 2)}});
  {
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    text.resize(text.size() - 15);  // truncate the final record
    std::ofstream out(path, std::ios::trunc);
    out << text;
  }
  try {
    load_dataset(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  {
    std::ofstream out(path, std::ios::trunc);
    out << R"({"format":"mbcal-dataset","version":99,"behaviors":6,"rewards":[0,1,2,3,4,5],"horizon":4})" << '\n';
  }
  try {
    load_dataset(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  // Partial sessions are rejected.
  save_dataset(path, Dataset{BehaviorSpace::ratings(), 4, {make_traj("short", 0, 3, 1)}});
  try {
    load_dataset(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line() == 2);
  }
  std::filesystem::remove(path);
}
