#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mira/shaping.hpp"
#include "mira/types.hpp"
#include "oracles.hpp"

using namespace mira;

TEST_CASE("gae worked examples") {
  const std::vector<double> zeros(4, 0.0);
  for (double a : gae(std::vector<double>(3, 0.0), zeros, 0.99, 0.95)) CHECK(a == 0.0);
  CHECK(gae(std::vector<double>{1.0}, std::vector<double>{0.0, 0.0}, 0.99, 0.95)[0] == 1.0);

  const std::vector<double> r = {0, 0, 1};
  const std::vector<double> v = {0.1, 0.2, 0.5, 0.0};
  const auto got = gae(r, v, 0.99, 0.95);
  const auto want = oracle::gae(r, v, 0.99, 0.95);
  for (size_t i = 0; i < 3; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-10);

  CHECK_THROWS_AS(gae(r, std::vector<double>(3, 0.0), 0.99, 0.95), std::invalid_argument);
  CHECK_THROWS_AS(gae(r, v, 1.5, 0.95), std::invalid_argument);
}

TEST_CASE("property: gae matches direct summation") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const size_t n = 1 + rng.below(30);
    std::vector<double> r(n), v(n + 1);
    for (auto& x : r) x = rng.below(5) == 0 ? rng.uniform() : 0.0;
    for (auto& x : v) x = rng.uniform() * 2 - 1;
    const double g = rng.uniform(), l = rng.uniform();
    const auto got = gae(r, v, g, l);
    const auto want = oracle::gae(r, v, g, l);
    for (size_t i = 0; i < n; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-10);
  }
}

TEST_CASE("shaped advantage worked examples") {
  ShapingSchedule s = ShapingSchedule::linear(1.0, {0.0}, 0.5, 10);
  const std::vector<double> a = {0.3, -1.25, 7.0};
  const auto out = shaped_advantage(a, std::vector<double>{1, 1, 1}, s, 0);
  CHECK(std::memcmp(out.shaped.data(), a.data(), sizeof(double) * a.size()) == 0);

  s = ShapingSchedule::linear(0.8, {0.3}, 0.5, 10);
  const auto zero_u = shaped_advantage(a, std::vector<double>(3, 0.0), s, 0);
  for (size_t i = 0; i < a.size(); ++i) CHECK(zero_u.shaped[i] == doctest::Approx(0.8 * a[i]));

  ShapingSchedule one = ShapingSchedule::linear(1.0, {0.25}, 0.5, 100);
  one.adv_floor = 1.0;
  const auto sub = shaped_advantage(std::vector<double>{0, 0}, std::vector<double>{1, 1}, one, 0);
  CHECK(sub.shaped[0] == doctest::Approx(0.25));
  CHECK(sub.shaped[1] == doctest::Approx(0.25));

  CHECK_THROWS_AS(shaped_advantage(a, std::vector<double>{1}, s, 0), std::invalid_argument);
}

TEST_CASE("schedule endpoints and closed forms") {
  const ShapingSchedule lin = ShapingSchedule::linear(0.8, {0.3}, 0.5, 50);
  CHECK(schedule_at(lin, 0).eta == 0.8);
  CHECK(schedule_at(lin, 0).xi == 0.3);
  CHECK(schedule_at(lin, 50).eta == 1.0);
  CHECK(schedule_at(lin, 50).xi == 0.0);

  ShapingSchedule ex;
  ex.eta0 = 1.0;
  ex.xi = {0.25};
  ex.delta = 0.5;
  ex.rate = 0.99;
  ex.eta_ramp = 0;
  CHECK(schedule_at(ex, 459).xi == doctest::Approx(0.25 * std::pow(0.99, 459)));
  CHECK(schedule_at(ex, 459).xi == doctest::Approx(0.0025).epsilon(0.01));

  const ShapingSchedule two = ShapingSchedule::exponential(0.8, {0.25, 0.15}, 0.5, 10, 20, 5);
  CHECK(schedule_at(two, 0).xi == 0.25);
  CHECK(schedule_at(two, 4).xi == 0.25);
  CHECK(schedule_at(two, 5).xi == 0.15);
  CHECK(schedule_at(two, 15).xi == doctest::Approx(0.075));
}

TEST_CASE("invalid schedules are rejected") {
  auto bad = [](auto mutate) {
    ShapingSchedule s = ShapingSchedule::linear(0.8, {0.3}, 0.5, 10);
    mutate(s);
    CHECK_THROWS_AS(schedule_at(s, 0), ConfigError);
  };
  bad([](ShapingSchedule& s) { s.delta = 1.0; });
  bad([](ShapingSchedule& s) { s.eta0 = 0.0; });
  bad([](ShapingSchedule& s) { s.xi = {0.5}; });  // above delta * eta0
  bad([](ShapingSchedule& s) { s.xi = {0.1, 0.2}; });
  bad([](ShapingSchedule& s) { s.horizon = 0; });
  CHECK_THROWS_AS(schedule_at(ShapingSchedule::linear(0.8, {0.3}, 0.5, 10), -1), std::invalid_argument);
}

TEST_CASE("property: random schedules satisfy the weight constraints") {
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const double eta0 = 0.05 + 0.95 * rng.uniform();
    const double delta = 0.99 * rng.uniform();
    std::vector<double> xi = {delta * eta0 * rng.uniform()};
    if (rng.below(2)) xi.push_back(xi[0] * rng.uniform());
    const std::int64_t horizon = 1 + static_cast<std::int64_t>(rng.below(300));
    const ShapingSchedule s =
        rng.below(2) ? ShapingSchedule::linear(eta0, xi, delta, horizon)
                     : ShapingSchedule::exponential(eta0, xi, delta, 1 + rng.uniform() * 50,
                                                    static_cast<std::int64_t>(rng.below(100)),
                                                    static_cast<std::int64_t>(rng.below(20)) + 1);
    ScheduleValue prev = schedule_at(s, 0);
    for (std::int64_t k = 0; k < 400; ++k) {
      const ScheduleValue v = schedule_at(s, k);
      CHECK(v.eta > 0.0);
      CHECK(v.eta <= 1.0);
      CHECK(v.xi >= 0.0);
      CHECK(v.xi <= delta * v.eta + 1e-12);
      CHECK(v.eta >= prev.eta);
      CHECK(v.xi <= prev.xi);
      CHECK(v.ratio() <= prev.ratio() + 1e-15);
      prev = v;
    }
    if (s.decay == DecayKind::kLinear) {
      CHECK(schedule_at(s, horizon + 1).eta == 1.0);
      CHECK(schedule_at(s, horizon + 1).xi == 0.0);
    } else {
      CHECK(schedule_at(s, 20000).xi < 1e-6);
    }
  }
}

TEST_CASE("property: shaped magnitudes stay within (1 + delta) A_max") {
  Rng rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const double delta = 0.99 * rng.uniform();
    const double eta0 = 0.1 + 0.9 * rng.uniform();
    ShapingSchedule s = ShapingSchedule::linear(eta0, {delta * eta0 * rng.uniform()}, delta, 50);
    const double a_max = s.adv_floor + 5 * rng.uniform();
    const size_t n = 1 + rng.below(64);
    std::vector<double> a(n), u(n);
    for (auto& x : a) x = (2 * rng.uniform() - 1) * a_max;
    for (auto& x : u) x = rng.uniform();
    const auto out = shaped_advantage(a, u, s, static_cast<std::int64_t>(rng.below(60)));
    for (double x : out.shaped) CHECK(std::abs(x) <= (1 + delta) * a_max + 1e-12);
  }
}
