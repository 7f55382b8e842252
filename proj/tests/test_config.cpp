#include <doctest.h>

#include <filesystem>

#include "mira/config.hpp"

using namespace mira;

TEST_CASE("config text round trips") {
  TrainConfig c;
  c.env.name = "doorkey";
  c.env.size = 6;
  c.shaping.xi0 = {0.25, 0.15};
  c.guidance.offline_phases = {"key", "goal"};
  c.guidance.online_cap = 10;
  c.run.seed = 123456789012345ULL;
  c.ppo.lr = 1.0 / 3.0;
  const std::string text = config_to_text(c);
  const TrainConfig back = parse_config(text);
  CHECK(config_to_text(back) == text);
  CHECK(back.ppo.lr == c.ppo.lr);
  CHECK(back.run.seed == c.run.seed);
  CHECK(back.shaping.xi0 == c.shaping.xi0);
}

TEST_CASE("parsing comments, types and errors") {
  const TrainConfig c = parse_config(
      "# comment\n"
      "[env]\n"
      "name = \"redball\"  # trailing\n"
      "size = 6\n"
      "[shaping]\n"
      "enabled = false\n"
      "xi0 = [0.1, 0.05]\n");
  CHECK(c.env.name == "redball");
  CHECK_FALSE(c.shaping.enabled);
  CHECK(c.shaping.xi0 == std::vector<double>{0.1, 0.05});
  CHECK_THROWS_AS(parse_config("[env]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[env]\nsize = \"six\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[env]\nsize 6\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/mira.toml"), ConfigError);
}

TEST_CASE("overrides") {
  TrainConfig c;
  apply_override(c, "ppo.lr=0.001");
  apply_override(c, "shaping.xi0=[0.2]");
  apply_override(c, "run.policy=network");
  CHECK(c.ppo.lr == 0.001);
  CHECK(c.shaping.xi0 == std::vector<double>{0.2});
  CHECK(c.run.policy == "network");
  CHECK_THROWS_AS(apply_override(c, "lr=0.1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "ppo.nothing=1"), ConfigError);
}

TEST_CASE("validation names the offending key") {
  TrainConfig c;
  c.shaping.delta = 1.2;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("delta") != std::string::npos);
  }
  c = TrainConfig{};
  c.run.policy = "forest";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.env.name = "maze";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("every config key is documented and accepted") {
  const auto keys = config_keys();
  CHECK(keys.size() > 40);
  const std::string text = config_to_text(TrainConfig{});
  for (const auto& k : keys) {
    CHECK(!k.help.empty());
    const auto dot = k.name.find('.');
    REQUIRE(dot != std::string::npos);
    CHECK(text.find(k.name.substr(dot + 1) + " = ") != std::string::npos);
  }
}

TEST_CASE("all shipped configs load and validate") {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(MIRA_CONFIG_DIR)) {
    if (e.path().extension() != ".toml") continue;
    CAPTURE(e.path().string());
    const TrainConfig c = load_config(e.path().string());
    CHECK_NOTHROW(c.validate());
    CHECK_NOTHROW(c.grid_spec().validate());
    ++n;
  }
  CHECK(n >= 8);
}
