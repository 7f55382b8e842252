#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mira/trainer.hpp"

using namespace mira;

namespace {

TrainConfig small_lake() {
  TrainConfig c;
  c.env.name = "lake";
  c.ppo.batch_size = 128;
  c.ppo.minibatch_size = 32;
  c.ppo.epochs = 2;
  c.ppo.lr = 0.01;
  c.shaping.eta0 = 0.8;
  c.shaping.xi0 = {0.3};
  c.shaping.delta = 0.5;
  c.guidance.offline_priors = true;
  c.run.iterations = 8;
  c.run.eval_interval = 4;
  c.run.eval_episodes = 3;
  c.run.seed = 11;
  return c;
}

TrainConfig small_doorkey() {
  TrainConfig c;
  c.env.name = "doorkey";
  c.env.size = 5;
  c.env.train_layouts = 2;
  c.env.eval_layouts = 2;
  c.ppo.batch_size = 256;
  c.ppo.minibatch_size = 64;
  c.ppo.epochs = 1;
  c.shaping.xi0 = {0.25};
  c.guidance.provider = "oracle";
  c.guidance.offline_priors = true;
  c.guidance.offline_phases = {"key", "door", "goal"};
  c.guidance.trigger_n = 1;
  c.guidance.online_cap = 3;
  c.run.policy = "network";
  c.run.hidden = 16;
  c.run.iterations = 4;
  c.run.eval_interval = 2;
  c.run.eval_episodes = 1;
  return c;
}

}  // namespace

TEST_CASE("training is deterministic for a seed") {
  const auto a = train(small_lake());
  const auto b = train(small_lake());
  CHECK(a.rows == b.rows);
  CHECK(a.policy == b.policy);
  CHECK(a.graph == b.graph);
  TrainConfig other = small_lake();
  other.run.seed = 12;
  CHECK_FALSE(train(other).policy == a.policy);
}

TEST_CASE("zero xi with unit eta reproduces the plain PPO path") {
  TrainConfig shaped = small_lake();
  shaped.shaping.eta0 = 1.0;
  shaped.shaping.xi0 = {0.0};
  TrainConfig plain = shaped;
  plain.shaping.enabled = false;
  plain.guidance.offline_priors = false;
  const auto a = train(shaped);
  const auto b = train(plain);
  CHECK(a.policy == b.policy);
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].mean_return == b.rows[i].mean_return);
    CHECK(a.rows[i].mean_abs_adv == b.rows[i].mean_abs_adv);
    CHECK(a.rows[i].clip_fraction == b.rows[i].clip_fraction);
  }
}

TEST_CASE("an empty graph gives zero utility on the first iteration") {
  TrainConfig c = small_lake();
  c.guidance.offline_priors = false;
  const auto r = train(c);
  CHECK(r.rows.front().mean_utility == 0.0);
  CHECK(r.rows.front().graph_size == 0);
}

TEST_CASE("emitted schedule weights respect the ratio bound") {
  const auto r = train(small_lake());
  for (size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(r.rows[i].xi <= r.rows[i].delta * r.rows[i].eta + 1e-12);
    if (i > 0) CHECK(r.rows[i].delta <= r.rows[i - 1].delta);
  }
}

TEST_CASE("guided doorkey run respects the online cap and writes its run directory") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mira_test_run";
  fs::remove_all(dir);
  TrainOptions opts;
  opts.run_dir = dir.string();
  const auto r = train(small_doorkey(), std::move(opts));
  CHECK(r.budget.online_used <= 3);
  CHECK(r.rows.back().online_queries_used == r.budget.online_used);
  for (const char* f : {"config.toml", "metrics.csv", "eval.csv", "graph_final.json", "learning_curve.svg"}) {
    CHECK(fs::exists(dir / f));
  }
  const auto rows = read_metrics_csv((dir / "metrics.csv").string());
  CHECK(rows.size() == 4);
  const fs::path ckpt = dir / "checkpoints" / "ckpt_3.bin";
  REQUIRE(fs::exists(ckpt));

  TrainConfig longer = small_doorkey();
  longer.run.iterations = 6;
  TrainOptions resume;
  resume.resume = ckpt.string();
  const auto more = train(longer, std::move(resume));
  REQUIRE(more.rows.size() == 2);
  CHECK(more.rows.front().iteration == 4);

  TrainConfig wrong = small_doorkey();
  wrong.run.hidden = 8;
  TrainOptions bad;
  bad.resume = ckpt.string();
  CHECK_THROWS_AS(train(wrong, std::move(bad)), ConfigError);
}

TEST_CASE("sr90 and final return") {
  std::vector<MetricsRow> rows(10);
  for (int i = 0; i < 10; ++i) {
    rows[i].iteration = i;
    rows[i].mean_return = i / 10.0;
    rows[i].success_rate = i >= 5 ? 0.95 : 0.9;
  }
  CHECK(sr90_return(rows) == doctest::Approx(0.5));
  rows[5].success_rate = 0.9;  // not strictly above
  CHECK(sr90_return(rows) == doctest::Approx(0.6));
  for (auto& r : rows) r.success_rate = 0.5;
  CHECK_FALSE(sr90_return(rows));
  CHECK(final_return(rows, 0.2) == doctest::Approx(0.85));
  CHECK(final_return(rows, 0.01) == doctest::Approx(0.9));
}

TEST_CASE("metrics csv round trips and rejects damage") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mira_test_metrics";
  fs::create_directories(dir);
  std::vector<MetricsRow> rows(3);
  rows[1].mean_return = 1.0 / 3.0;
  rows[2].xi = 0.125;
  rows[2].online_queries_used = 7;
  write_metrics_csv(rows, (dir / "m.csv").string());
  CHECK(read_metrics_csv((dir / "m.csv").string()) == rows);
  {
    std::ofstream os(dir / "bad.csv");
    os << "a,b,c\n1,2,3\n";
  }
  CHECK_THROWS_AS(read_metrics_csv((dir / "bad.csv").string()), ConfigError);
  CHECK_THROWS_AS(read_metrics_csv((dir / "none.csv").string()), ConfigError);
}

TEST_CASE("layout seed streams are disjoint") {
  TrainConfig c;
  c.env.train_layouts = 50;
  c.env.eval_layouts = 50;
  const auto tr = train_layout_seeds(c);
  const auto ev = eval_layout_seeds(c);
  for (auto s : tr) CHECK(std::find(ev.begin(), ev.end(), s) == ev.end());
}
