#include <doctest.h>

#include <cmath>

#include "mira/gridworld.hpp"
#include "mira/policy.hpp"
#include "mira/ppo.hpp"

using namespace mira;

namespace {

RolloutBatch sample_batch(const Policy& p, const GridSpec& spec, int n, std::uint64_t seed) {
  EnvPool pool{spec, {seed, seed + 1}, 0};
  Rng rng(seed);
  return collect_rollouts(p, pool, n, rng);
}

void jitter(Policy& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (double& x : p.params()) x += scale * rng.normal();
}

}  // namespace

TEST_CASE("softmax with and without penalties") {
  const std::vector<double> logits = {0, 0, 0, 0};
  for (double q : action_probs(logits, {})) CHECK(q == doctest::Approx(0.25));
  const std::vector<double> pen = {1, 0, 0, 0};
  // e^-1 / (e^-1 + 3)
  CHECK(action_probs(logits, pen)[0] == doctest::Approx(0.1092).epsilon(1e-3));
  CHECK(std::exp(log_softmax_at(logits, pen, 0)) == doctest::Approx(action_probs(logits, pen)[0]));
  const std::vector<double> big = {1000, 0, -1000};
  const auto p = action_probs(big, {});
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(log_softmax_at(big, {}, 2)));
}

TEST_CASE("a capped penalty never drives an action below the floor") {
  const double cap = 2.0;
  const double floor = penalty_floor(cap, 7);
  CHECK(floor == doctest::Approx(std::exp(-2.0) / (std::exp(-2.0) + 6)));
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> logits(7, 0.0), pen(7, 0.0);
    const size_t a = rng.below(7);
    pen[a] = cap * rng.uniform();
    CHECK(action_probs(logits, pen)[a] >= floor - 1e-15);
    CHECK(action_probs(logits, pen)[a] > 0.0);
  }
}

TEST_CASE("tabular policy starts uniform with zero value") {
  const GridSpec spec = lake_8x8(2.0 / 3.0);
  const Policy p(PolicyShape{PolicyKind::kTabular, feature_count(spec), 4}, 1);
  const auto obs = reset(spec, 0).second;
  const Forward f = p.forward(obs.features());
  for (double q : action_probs(f.logits, {})) CHECK(q == doctest::Approx(0.25));
  CHECK(f.value == 0.0);
  CHECK_THROWS_AS(Policy(PolicyShape{PolicyKind::kTabular, 0, 4}, 1), std::invalid_argument);
  CHECK_THROWS_AS(Policy(PolicyShape{PolicyKind::kNetwork, 10, 1}, 1), std::invalid_argument);
}

TEST_CASE("network init is seed deterministic") {
  const PolicyShape s{PolicyKind::kNetwork, 30, 7, 16, 5};
  CHECK(Policy(s, 3) == Policy(s, 3));
  CHECK_FALSE(Policy(s, 3) == Policy(s, 4));
}

TEST_CASE("analytic gradients match central differences") {
  PpoConfig cfg;
  SUBCASE("tabular") {
    const GridSpec spec = lake_8x8(2.0 / 3.0);
    Policy p(PolicyShape{PolicyKind::kTabular, feature_count(spec), 4}, 2);
    jitter(p, 9, 0.3);
    const RolloutBatch b = sample_batch(p, spec, 128, 5);
    jitter(p, 10, 0.05);  // move off the behaviour policy so ratios differ from one
    std::vector<double> adv(b.size()), ret(b.size());
    Rng rng(6);
    for (size_t i = 0; i < b.size(); ++i) {
      adv[i] = rng.normal();
      ret[i] = rng.uniform();
    }
    CHECK(gradient_check(p, b, adv, ret, cfg, rng, 40) < 1e-6);
  }
  SUBCASE("network") {
    const GridSpec spec = doorkey(6);
    Policy p(PolicyShape{PolicyKind::kNetwork, feature_count(spec), kGridActionCount, 16, 50}, 2);
    const RolloutBatch b = sample_batch(p, spec, 96, 7);
    jitter(p, 11, 0.01);
    std::vector<double> adv(b.size()), ret(b.size());
    Rng rng(8);
    for (size_t i = 0; i < b.size(); ++i) {
      adv[i] = rng.normal();
      ret[i] = rng.uniform();
    }
    CHECK(gradient_check(p, b, adv, ret, cfg, rng, 40) < 1e-4);
  }
}
