#include <doctest.h>

#include <cmath>
#include <deque>
#include <set>

#include "mira/gridworld.hpp"
#include "mira/guidance.hpp"

using namespace mira;

namespace {

// Plain BFS over the 4-neighbourhood used as an independent distance oracle.
int bfs_oracle(const EnvState& s, Pos from, Pos to) {
  std::vector<int> dist(s.tiles.size(), -1);
  auto idx = [&](Pos p) { return static_cast<size_t>(p.row * s.width + p.col); };
  std::deque<Pos> q{from};
  dist[idx(from)] = 0;
  while (!q.empty()) {
    const Pos p = q.front();
    q.pop_front();
    if (p == to) return dist[idx(p)];
    for (Pos d : {Pos{0, 1}, Pos{1, 0}, Pos{0, -1}, Pos{-1, 0}}) {
      const Pos n = p + d;
      if (!s.in_bounds(n) || dist[idx(n)] >= 0) continue;
      const auto t = s.at(n).type;
      if (t == CellType::kWall || t == CellType::kHole) continue;
      if (t == CellType::kDoor && s.at(n).door != DoorState::kOpen && !(n == to)) continue;
      dist[idx(n)] = dist[idx(p)] + 1;
      q.push_back(n);
    }
  }
  return -1;
}

void run_plan(const GridSpec& spec, EnvState& s, const std::vector<int>& plan) {
  Rng rng(0);
  for (int a : plan) step(spec, s, a, rng);
}

}  // namespace

TEST_CASE("lake reset places the agent on the start cell") {
  const GridSpec spec = lake_8x8(2.0 / 3.0);
  auto [s, obs] = reset(spec, 0);
  CHECK(s.agent_pos == Pos{0, 0});
  CHECK(s.step_count == 0);
  CHECK(obs.tabular_index == 0);
  CHECK(reset(spec, 0).first.layout_id == s.layout_id);
}

TEST_CASE("doorkey layouts differ across seeds and are reproducible") {
  const GridSpec spec = doorkey(6);
  const auto a = reset(spec, 3).first;
  const auto b = reset(spec, 4).first;
  CHECK(a.layout_id != b.layout_id);
  CHECK(a.tiles != b.tiles);
  CHECK(reset(spec, 3).first == a);
}

TEST_CASE("invalid specs are rejected") {
  GridSpec spec = empty_lake(4, 4);
  spec.width = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  CHECK_THROWS_AS(parse_layout("SFF\nFFF\n", Family::kTabular, 10), ConfigError);  // no goal
  CHECK_THROWS_AS(parse_layout("FFF\nFFG\n", Family::kTabular, 10), ConfigError);  // no start
}

TEST_CASE("lake goal and hole rules") {
  GridSpec spec = parse_layout("SG\nHF\n", Family::kTabular, 10);
  Rng rng(1);
  {
    auto [s, obs] = reset(spec, 0);
    const auto r = step(spec, s, static_cast<int>(LakeAction::kRight), rng);
    CHECK(r.reward == 1.0);
    CHECK(r.done);
    CHECK(r.success);
    CHECK_THROWS_AS(step(spec, s, 0, rng), std::logic_error);
  }
  {
    auto [s, obs] = reset(spec, 0);
    const auto r = step(spec, s, static_cast<int>(LakeAction::kDown), rng);
    CHECK(r.reward == 0.0);
    CHECK(r.done);
    CHECK_FALSE(r.success);
  }
}

TEST_CASE("slip marginals match slip_prob split evenly across both sides") {
  const GridSpec spec = [] {
    GridSpec g = empty_lake(8, 8);
    g.slip_prob = 2.0 / 3.0;
    return g;
  }();
  Rng rng(42);
  const int n = 30000;
  int down = 0, left = 0, right = 0;
  for (int i = 0; i < n; ++i) {
    EnvState s = reset(spec, 0).first;
    s.agent_pos = {3, 3};
    step(spec, s, static_cast<int>(LakeAction::kDown), rng);
    if (s.agent_pos == Pos{4, 3}) ++down;
    if (s.agent_pos == Pos{3, 2}) ++left;
    if (s.agent_pos == Pos{3, 4}) ++right;
  }
  CHECK(down + left + right == n);
  for (int c : {down, left, right}) CHECK(std::abs(c / double(n) - 1.0 / 3.0) < 0.02);

  // Each side p/2 within three binomial standard deviations.
  for (double p : {0.1, 0.5}) {
    GridSpec g = empty_lake(8, 8);
    g.slip_prob = p;
    int side = 0;
    for (int i = 0; i < n; ++i) {
      EnvState s = reset(g, 0).first;
      s.agent_pos = {3, 3};
      step(g, s, static_cast<int>(LakeAction::kDown), rng);
      if (s.agent_pos == Pos{3, 2}) ++side;
    }
    const double q = p / 2;
    CHECK(std::abs(side - n * q) <= 3 * std::sqrt(n * q * (1 - q)));
  }
}

TEST_CASE("shortest path distances agree with the BFS oracle") {
  const GridSpec empty = empty_lake(8, 8);
  const EnvState e = reset(empty, 0).first;
  CHECK(shortest_path_distance(e, {0, 0}, {0, 1}) == 1);
  CHECK(shortest_path_distance(e, {0, 0}, {7, 7}) == 14);

  const GridSpec lake = lake_8x8(0.0);
  const EnvState l = reset(lake, 0).first;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      if (l.at({r, c}).type == CellType::kHole) continue;
      const int want = bfs_oracle(l, {0, 0}, {r, c});
      const auto got = shortest_path_distance(l, {0, 0}, {r, c});
      if (want < 0) {
        CHECK_FALSE(got.has_value());
      } else {
        CHECK(got == want);
      }
    }
  }
}

TEST_CASE("a locked door blocks the room behind it") {
  const GridSpec spec = doorkey(6);
  const EnvState s = reset(spec, 0).first;
  const Pos goal = *s.find(CellType::kGoal);
  CHECK_FALSE(shortest_path_distance(s, goal).has_value());
  EnvState open = s;
  open.at(*open.find(CellType::kDoor)).door = DoorState::kOpen;
  CHECK(shortest_path_distance(open, goal) == bfs_oracle(open, open.agent_pos, goal));
}

TEST_CASE("doorkey phases follow key pickup and door opening") {
  const GridSpec spec = doorkey(6);
  EnvState s = reset(spec, 5).first;
  CHECK(subgoal_phase(spec, s) == make_phase(Entity::kKey, Verb::kNavigate));

  run_plan(spec, s, *plan_to(spec, s, *s.find(CellType::kKey), true));
  REQUIRE(s.carrying);
  CHECK(subgoal_phase(spec, s) == make_phase(Entity::kDoor, Verb::kToggle));

  run_plan(spec, s, *plan_to(spec, s, *s.find(CellType::kDoor), true));
  CHECK(s.at(*s.find(CellType::kDoor)).door == DoorState::kOpen);
  CHECK(subgoal_phase(spec, s) == make_phase(Entity::kGoal, Verb::kNavigate));

  // The reward follows the step-count discount.
  const auto plan = *plan_to(spec, s, *s.find(CellType::kGoal), false);
  Rng rng(0);
  StepResult last;
  for (int a : plan) last = step(spec, s, a, rng);
  CHECK(last.success);
  CHECK(last.reward == doctest::Approx(1.0 - 0.9 * s.step_count / double(spec.max_steps)));
}

TEST_CASE("lake and redball are single phase") {
  const GridSpec lake = lake_8x8(0.0);
  CHECK(subgoal_phase(lake, reset(lake, 0).first) == make_phase(Entity::kGoal, Verb::kNavigate));
  const GridSpec rb = redball(6);
  CHECK(subgoal_phase(rb, reset(rb, 2).first) == make_phase(Entity::kGoal, Verb::kNavigate));
}

TEST_CASE("egocentric view hides cells behind walls") {
  // Agent faces north (dir 3) toward a wall two cells ahead.
  const GridSpec spec = parse_layout(
      "FFGFF\n"
      "FFFFF\n"
      "WWWWW\n"
      "FFFFF\n"
      "FFSFF\n",
      Family::kGridworld, 50);
  EnvState s = reset(spec, 0).first;
  s.agent_dir = 3;
  const EgocentricView v = egocentric_view(s, 7, false);
  // Agent at (6,3) in view coordinates; wall row is two ahead.
  CHECK(v.at(6, 3) == ViewTag::kEmpty);
  CHECK(v.at(4, 3) == ViewTag::kWall);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 7; ++c) CHECK(v.at(r, c) == ViewTag::kUnseen);
  }
}

TEST_CASE("carried items show only when asked") {
  const GridSpec spec = doorkey(6);
  EnvState s = reset(spec, 1).first;
  run_plan(spec, s, *plan_to(spec, s, *s.find(CellType::kKey), true));
  REQUIRE(s.carrying);
  const int self = (7 - 1) * 7 + 3;
  CHECK(egocentric_view(s, 7, true).cells[self] == ViewTag::kKey);
  CHECK(egocentric_view(s, 7, false).cells[self] == ViewTag::kEmpty);
}

TEST_CASE("failed episodes carry zero reward and trajectories replay") {
  for (const GridSpec& spec : {lake_8x8(2.0 / 3.0), doorkey(6), lava_crossing(9), redball(6)}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng r1(seed), r2(seed);
      auto a = reset(spec, seed).first;
      auto b = reset(spec, seed).first;
      double total = 0.0;
      bool success = false;
      Rng actions(seed + 100);
      while (!a.done) {
        const int act = static_cast<int>(actions.below(action_count(spec.family)));
        const auto ra = step(spec, a, act, r1);
        const auto rb = step(spec, b, act, r2);
        CHECK(ra.reward == rb.reward);
        total += ra.reward;
        success = success || ra.success;
      }
      CHECK(a == b);
      CHECK(a.step_count <= spec.max_steps);
      if (!success) CHECK(total == 0.0);
    }
  }
}

TEST_CASE("subgoal phase is a function of the state") {
  const GridSpec spec = doorkey(6);
  EnvState s = reset(spec, 2).first;
  const EnvState copy = s;
  CHECK(subgoal_phase(spec, s) == subgoal_phase(spec, copy));
  std::set<std::string> seen;
  Rng rng(3);
  while (!s.done) {
    step(spec, s, static_cast<int>(rng.below(kGridActionCount)), rng);
    const EnvState t = s;
    CHECK(subgoal_phase(spec, s) == subgoal_phase(spec, t));
    seen.insert(subgoal_phase(spec, s).str());
  }
  CHECK(!seen.empty());
}

TEST_CASE("layout files parse the documented cell codes") {
  const GridSpec spec = parse_layout(
      "WWWWW\n"
      "WSKDW\n"
      "WBXGW\n"
      "WWWWW\n",
      Family::kGridworld, 30);
  const EnvState s = reset(spec, 0).first;
  CHECK(s.agent_pos == Pos{1, 1});
  CHECK(s.at({1, 2}).type == CellType::kKey);
  CHECK(s.at({1, 3}).type == CellType::kDoor);
  CHECK(s.at({2, 1}).type == CellType::kBall);
  CHECK(s.at({2, 2}).type == CellType::kBox);
  CHECK(s.at({2, 3}).type == CellType::kGoal);
  CHECK_THROWS_AS(parse_layout("SQG\n", Family::kTabular, 10), ConfigError);
}
