#include <doctest.h>

#include "mira/utility.hpp"
#include "oracles.hpp"

using namespace mira;

namespace {

const SubgoalPhase kKeyNav = make_phase(Entity::kKey, Verb::kNavigate);

AnnotatedTransition tr(int r, int c, int a, std::optional<int> dir = 0,
                       SubgoalPhase phase = make_phase(Entity::kKey, Verb::kNavigate)) {
  return {Pos{r, c}, dir, a, phase};
}

TrajectoryNode node_with(std::vector<AnnotatedTransition> seg, double c, double r) {
  TrajectoryNode n;
  n.id = 1;
  n.segment = std::move(seg);
  n.confidence = c;
  n.r_hat = r;
  n.zeta = "k1";
  return n;
}

}  // namespace

TEST_CASE("similarity levels") {
  CHECK(similarity(tr(1, 1, 2, 0), tr(1, 1, 2, 0)) == 1.0);
  CHECK(similarity(tr(1, 1, 2, 0), tr(1, 1, 2, 2)) == 0.7);
  CHECK(similarity(tr(1, 1, 2, 1), tr(3, 3, 0, 2)) == 0.4);
  CHECK(similarity(tr(1, 1, 2, 1), tr(3, 3, 0, 0)) == 0.4);
  CHECK(similarity(tr(1, 1, 2, 1), tr(3, 3, 0, 1)) == 0.0);
  CHECK(similarity(tr(1, 1, 2, std::nullopt), tr(1, 1, 2, std::nullopt)) == 1.0);
  CHECK(similarity(tr(1, 1, 2, std::nullopt), tr(1, 1, 3, std::nullopt)) == 0.0);
  CHECK_THROWS_AS(similarity(tr(1, 1, 2, 0), tr(1, 1, 2, std::nullopt)), std::invalid_argument);
}

TEST_CASE("goal alignment is the Jaccard index of the token pairs") {
  CHECK(goal_alignment(kKeyNav, kKeyNav) == 1.0);
  CHECK(goal_alignment(kKeyNav, make_phase(Entity::kDoor, Verb::kNavigate)) == doctest::Approx(1.0 / 3));
  CHECK(goal_alignment(kKeyNav, make_phase(Entity::kDoor, Verb::kToggle)) == 0.0);
  CHECK_THROWS_AS(goal_alignment(kKeyNav, SubgoalPhase{}), std::invalid_argument);
}

TEST_CASE("tokenizer extracts entity and phase") {
  CHECK(tokenize_subgoal("Go to key") == kKeyNav);
  CHECK(tokenize_subgoal("Toggle door") == make_phase(Entity::kDoor, Verb::kToggle));
  CHECK(tokenize_subgoal("Pick up the red ball") == make_phase(Entity::kBall, Verb::kAcquire));
  CHECK(tokenize_subgoal("Unlock the door with the key") == make_phase(Entity::kDoor, Verb::kToggle));
  CHECK_THROWS_AS(tokenize_subgoal("Dance wildly"), ConfigError);
  CHECK_THROWS_AS(tokenize_subgoal(""), ConfigError);
}

TEST_CASE("compute_utility worked examples") {
  const std::vector<AnnotatedTransition> seg = {tr(1, 1, 2), tr(1, 2, 2), tr(1, 3, 5)};
  SUBCASE("identical rollout") {
    const auto u = compute_utility(seg, node_with(seg, 0.8, 0.5), kKeyNav);
    for (double v : u.values) CHECK(v == doctest::Approx(0.40));
    CHECK(u.matched_node == 1);
  }
  SUBCASE("no overlap") {
    const std::vector<AnnotatedTransition> other = {tr(5, 5, 0, 0), tr(5, 6, 0, 0), tr(5, 7, 0, 0)};
    const auto u = compute_utility(other, node_with(seg, 0.8, 0.5), kKeyNav);
    for (double v : u.values) CHECK(v == 0.0);
    CHECK_FALSE(u.matched_node);
  }
  SUBCASE("single moderate match with partial alignment") {
    const std::vector<AnnotatedTransition> mem = {tr(2, 2, 2, 0, make_phase(Entity::kDoor, Verb::kNavigate))};
    TrajectoryNode n = node_with(mem, 1.0, 1.0);
    const std::vector<AnnotatedTransition> roll = {tr(0, 0, 1, 0), tr(2, 2, 2, 2)};
    const auto u = compute_utility(roll, n, make_phase(Entity::kDoor, Verb::kNavigate));
    CHECK(u.values[0] == 0.0);
    CHECK(u.values[1] == doctest::Approx(0.7 / 3));
  }
  SUBCASE("rollout shorter than the segment aligns the overlapping suffix") {
    const std::vector<AnnotatedTransition> roll = {tr(1, 3, 5)};
    const auto u = compute_utility(roll, node_with(seg, 1.0, 1.0), kKeyNav);
    CHECK(u.values == std::vector<double>{1.0});
  }
  SUBCASE("empty rollout") {
    CHECK(compute_utility({}, node_with(seg, 1.0, 1.0), kKeyNav).values.empty());
  }
  SUBCASE("target-goal alignment mode") {
    const auto u = compute_utility(seg, node_with(seg, 1.0, 1.0), kKeyNav,
                                   make_phase(Entity::kGoal, Verb::kNavigate),
                                   AlignmentMode::kTargetGoalVsNode);
    for (double v : u.values) CHECK(v == doctest::Approx(1.0 / 3));
  }
}

TEST_CASE("property: utility range, nullity and monotonicity") {
  Rng rng(11);
  auto rand_tr = [&] {
    return tr(static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3)),
              static_cast<int>(rng.below(3)), static_cast<int>(rng.below(4)),
              rng.below(2) ? kKeyNav : make_phase(Entity::kDoor, Verb::kToggle));
  };
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<AnnotatedTransition> seg(1 + rng.below(6)), roll(rng.below(11));
    for (auto& t : seg) t = rand_tr();
    for (auto& t : roll) t = rand_tr();
    const double c = rng.uniform(), r = rng.uniform();
    const SubgoalPhase tokens = rng.below(2) ? kKeyNav : make_phase(Entity::kDoor, Verb::kNavigate);
    const auto u = compute_utility(roll, node_with(seg, c, r), tokens);
    for (double v : u.values) {
      CHECK(v >= 0.0);
      CHECK(v <= c * r + 1e-15);
    }
    CHECK(compute_utility(roll, node_with(seg, 0.0, r), tokens).sum() == 0.0);
    CHECK(compute_utility(roll, node_with(seg, c, 0.0), tokens).sum() == 0.0);
    const auto up = compute_utility(roll, node_with(seg, std::min(1.0, c + 0.1), r), tokens);
    for (size_t i = 0; i < u.values.size(); ++i) CHECK(up.values[i] >= u.values[i]);
  }
}

TEST_CASE("symmetry of goal alignment over all token pairs") {
  std::vector<SubgoalPhase> all;
  for (int e = -1; e < 6; ++e) {
    for (int v = -1; v < 3; ++v) {
      SubgoalPhase p;
      if (e >= 0) p.entity = static_cast<Entity>(e);
      if (v >= 0) p.verb = static_cast<Verb>(v);
      if (!p.empty()) all.push_back(p);
    }
  }
  for (const auto& a : all) {
    for (const auto& b : all) {
      CHECK(goal_alignment(a, b) == goal_alignment(b, a));
      CHECK(goal_alignment(a, b) == doctest::Approx(oracle::jaccard(a, b)).epsilon(1e-15));
    }
  }
}

TEST_CASE("match_rollout picks the candidate with the largest total") {
  MemoryGraph g;
  g.add_final_goal("g0", "Go to goal");
  g.add_subgoal("k1", "Go to key", "g0");
  InsertRequest a;
  a.layout_id = 3;
  a.zeta = "k1";
  a.segment = {tr(0, 0, 2), tr(0, 1, 2)};
  a.r_hat = 0.5;
  a.confidence = 1.0;
  a.source = Source::kOfflineLlm;
  g.insert_or_update(a);
  InsertRequest b = a;
  b.segment = {tr(4, 4, 2)};
  b.r_hat = 0.4;
  g.insert_or_update(b);
  REQUIRE(g.size() == 2);
  const std::vector<AnnotatedTransition> roll = {tr(0, 0, 2), tr(0, 1, 2)};
  const auto u = match_rollout(g, 3, kKeyNav, roll);
  CHECK(u.matched_node == g.trajectory_nodes()[0].id);
  CHECK(u.sum() == doctest::Approx(1.0));
  CHECK(match_rollout(g, 4, kKeyNav, roll).sum() == 0.0);
  CHECK_FALSE(match_rollout(g, 4, kKeyNav, roll).matched_node);
}
