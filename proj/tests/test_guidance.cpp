#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mira/guidance.hpp"

using namespace mira;

namespace {

Completion with_probs(const std::string& text, std::vector<double> probs) {
  Completion c{text, {}};
  for (double p : probs) c.logprobs.push_back(std::log(p));
  return c;
}

const char* kPlanA = R"({"type":"plan","subgoal":"Go to key","actions":["forward","forward","pickup"]})";
const char* kPlanB = R"({"type":"plan","subgoal":"Go to key","actions":["turn-left","forward"]})";
const char* kPlanC = R"({"type":"control","action":"toggle"})";

EnvState key_ahead_state(GridSpec& spec) {
  spec = parse_layout(
      "WWWWWW\n"
      "WSFKFW\n"
      "WFFFGW\n"
      "WWWWWW\n",
      Family::kGridworld, 50);
  EnvState s = reset(spec, 0).first;
  s.agent_dir = 0;
  return s;
}

}  // namespace

TEST_CASE("likelihood screening fixtures") {
  const auto s = parse_suggestion(with_probs(kPlanA, {0.5, 0.5}), Family::kGridworld);
  REQUIRE(s);
  Suggestion low = *s;
  low.logprobs = std::vector<double>{std::log(0.5), std::log(0.5)};
  CHECK_FALSE(screen_by_likelihood(low).accepted);
  Suggestion high = *s;
  high.logprobs = std::vector<double>{std::log(0.9), std::log(0.9), std::log(0.9)};
  const auto r = screen_by_likelihood(high);
  CHECK(r.accepted);
  CHECK(r.score == doctest::Approx(0.9));
  Suggestion edge = *s;
  edge.logprobs = std::vector<double>{std::log(0.65)};
  CHECK(screen_by_likelihood(edge).accepted);
  Suggestion none = *s;
  none.logprobs.reset();
  CHECK_THROWS_AS(screen_by_likelihood(none), std::invalid_argument);
}

TEST_CASE("consistency screening fixtures") {
  const std::vector<Completion> aab = {{kPlanA, {}}, {kPlanA, {}}, {kPlanB, {}}};
  const auto ok = screen_by_consistency(aab, Family::kGridworld);
  CHECK(ok.result.accepted);
  CHECK(ok.result.score == doctest::Approx(2.0 / 3.0));
  REQUIRE(ok.suggestion);
  CHECK(ok.suggestion->canonical() == parse_suggestion({kPlanA, {}}, Family::kGridworld)->canonical());

  const std::vector<Completion> abc = {{kPlanA, {}}, {kPlanB, {}}, {kPlanC, {}}};
  CHECK_FALSE(screen_by_consistency(abc, Family::kGridworld).result.accepted);

  // Unparseable completions never agree.
  const std::vector<Completion> junk = {{"hello", {}}, {"hello", {}}, {kPlanA, {}}};
  CHECK_FALSE(screen_by_consistency(junk, Family::kGridworld).result.accepted);

  const std::vector<Completion> one = {{kPlanA, {}}};
  CHECK_THROWS(screen_by_consistency(one, Family::kGridworld));
}

TEST_CASE("screen dispatches on logprobs and honours disabling") {
  ScreeningConfig cfg;
  const std::vector<Completion> lp = {with_probs(kPlanA, {0.9, 0.9})};
  CHECK(screen(lp, Family::kGridworld, cfg).result.method == ScreenMethod::kLikelihood);
  const std::vector<Completion> plain = {{kPlanA, {}}, {kPlanB, {}}, {kPlanC, {}}};
  CHECK(screen(plain, Family::kGridworld, cfg).result.method == ScreenMethod::kConsistency);
  cfg.enabled = false;
  const auto off = screen(plain, Family::kGridworld, cfg);
  CHECK(off.result.accepted);
  CHECK(off.result.method == ScreenMethod::kDisabled);
  REQUIRE(off.suggestion);
  CHECK(off.suggestion->kind == SuggestionKind::kPlan);
}

TEST_CASE("suggestion parsing") {
  const auto plan = parse_suggestion({kPlanA, {}}, Family::kGridworld);
  REQUIRE(plan);
  CHECK(plan->actions == std::vector<int>{2, 2, 3});
  CHECK(plan->canonical() == "plan:2,2,3");
  const auto ctl = parse_suggestion({kPlanC, {}}, Family::kGridworld);
  REQUIRE(ctl);
  CHECK(ctl->canonical() == "control:5");
  CHECK(parse_suggestion({R"({"type":"control","action":2})", {}}, Family::kTabular)->control_action == 2);
  CHECK_FALSE(parse_suggestion({R"({"type":"plan","actions":["fly"]})", {}}, Family::kGridworld));
  CHECK_FALSE(parse_suggestion({R"({"type":"control","action":9})", {}}, Family::kTabular));
  CHECK_FALSE(parse_suggestion({"not json", {}}, Family::kGridworld));
  const auto round = parse_suggestion({suggestion_to_text(*plan, Family::kGridworld), {}}, Family::kGridworld);
  REQUIRE(round);
  CHECK(round->canonical() == plan->canonical());
}

TEST_CASE("trigger fires after the threshold of empty episodes and resets") {
  TriggerState t;
  t.threshold = 3;
  CHECK_FALSE(t.check(0.0));
  CHECK_FALSE(t.check(0.0));
  CHECK(t.check(0.0));
  CHECK(t.counter == 0);
  CHECK_FALSE(t.check(0.0));
  CHECK_FALSE(t.check(0.5));
  CHECK(t.counter == 0);
}

TEST_CASE("online budget caps queries") {
  QueryBudget b;
  b.online_cap = 2;
  b.charge_online();
  b.charge_online();
  CHECK_FALSE(b.online_available());
  CHECK_THROWS_AS(b.charge_online(), BudgetExhausted);
  CHECK(b.online_used == 2);
  QueryBudget open;
  for (int i = 0; i < 100; ++i) open.charge_online();
  CHECK(open.online_available());
}

TEST_CASE("query contexts never reveal the inventory or cells outside the window") {
  const GridSpec spec = doorkey(8);
  EnvState s = reset(spec, 3).first;
  s.carrying.reset();
  EpisodeRecord ep;
  ep.anchor = s;
  ep.recent_views = {egocentric_view(s, spec.view_size, false)};
  const SubgoalPhase phase = subgoal_phase(spec, s);
  const std::string base = build_context(spec, ep, phase).serialize();

  // Changing a cell far behind the agent leaves the context unchanged.
  EnvState moved = s;
  const Pos behind = {moved.agent_pos.row - dir_vec(moved.agent_dir).row * 7,
                      moved.agent_pos.col - dir_vec(moved.agent_dir).col * 7};
  if (moved.in_bounds(behind) && moved.at(behind).type == CellType::kFloor) {
    moved.at(behind).type = CellType::kBall;
    EpisodeRecord ep2 = ep;
    ep2.recent_views = {egocentric_view(moved, spec.view_size, false)};
    CHECK(build_context(spec, ep2, phase).serialize() == base);
  }
  CHECK(base.find("carrying") == std::string::npos);
}

TEST_CASE("oracle plans pick up a visible key") {
  GridSpec spec;
  const EnvState s = key_ahead_state(spec);
  QueryContext ctx;
  ctx.family = Family::kGridworld;
  ctx.views = {egocentric_view(s, 7, false)};
  ctx.phase = make_phase(Entity::kKey, Verb::kNavigate);
  const Suggestion a = OracleProvider().answer(ctx);
  REQUIRE(a.kind == SuggestionKind::kPlan);
  EnvState end;
  REQUIRE(simulate_plan(spec, s, a.actions, &end));
  CHECK(end.carrying);

  Rng rng(1);
  OracleProvider bad(1.0);
  const auto out = bad.complete(ctx, 3, rng);
  CHECK(out.size() == 3);
  OracleProvider good(0.0);
  for (const auto& c : good.complete(ctx, 3, rng)) {
    CHECK(parse_suggestion(c, Family::kGridworld)->canonical() == a.canonical());
  }
}

TEST_CASE("oracle lake plans avoid holes") {
  const GridSpec spec = lake_8x8(0.0);
  const EnvState s = reset(spec, 0).first;
  const auto paths = lake_safe_paths(spec, s);
  REQUIRE(paths.size() == 2);
  CHECK(paths[0].size() == 14);
  for (const auto& p : paths) {
    EnvState end;
    const auto seg = simulate_plan(spec, s, p, &end);
    REQUIRE(seg);
    CHECK(end.at(end.agent_pos).type == CellType::kGoal);
    for (const auto& t : *seg) CHECK(s.at(t.position).type != CellType::kHole);
  }
}

TEST_CASE("fixture provider replays by context hash") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mira_test_fixture";
  fs::create_directories(dir);
  QueryContext ctx;
  ctx.family = Family::kGridworld;
  ctx.env_description = "test";
  ctx.phase = make_phase(Entity::kKey, Verb::kNavigate);
  std::map<std::string, std::vector<Completion>> rec;
  rec[ctx.hash()] = {with_probs(kPlanA, {0.9}), {kPlanB, {}}};
  const std::string path = (dir / "f.json").string();
  {
    std::ofstream os(path);
    os << FixtureProvider::to_json(rec);
  }
  FixtureProvider fp(path);
  Rng rng(0);
  CHECK(fp.complete(ctx, 2, rng) == rec[ctx.hash()]);
  CHECK(fp.complete(ctx, 1, rng).size() == 1);
  QueryContext other = ctx;
  other.env_description = "other";
  CHECK_THROWS_AS(fp.complete(other, 1, rng), TransportError);
  CHECK_THROWS_AS(FixtureProvider((dir / "missing.json").string()), ConfigError);
  {
    std::ofstream os(dir / "bad.json");
    os << "{\"x\": 1}";
  }
  CHECK_THROWS_AS(FixtureProvider((dir / "bad.json").string()), ConfigError);
}

TEST_CASE("apply_suggestion grafts plans, registers penalties and drops rejections") {
  GridSpec spec;
  const EnvState s = key_ahead_state(spec);
  MemoryGraph g;
  seed_goals(g, spec);
  std::vector<LogitPenalty> pens;
  ApplyParams params;
  const auto plan = *parse_suggestion({kPlanA, {}}, Family::kGridworld);
  const ScreeningResult yes{true, ScreenMethod::kLikelihood, 0.9};
  const ScreeningResult no{false, ScreenMethod::kLikelihood, 0.3};

  CHECK(apply_suggestion(plan, no, g, pens, spec, s, params).kind == ApplyKind::kDropped);
  CHECK(g.size() == 0);

  const auto graft = apply_suggestion(plan, yes, g, pens, spec, s, params);
  CHECK(graft.kind == ApplyKind::kGrafted);
  REQUIRE(g.size() == 1);
  CHECK(g.trajectory_nodes()[0].source == Source::kOnlineLlm);
  CHECK(g.trajectory_nodes()[0].confidence == doctest::Approx(0.9));

  const auto ctl = *parse_suggestion({kPlanC, {}}, Family::kGridworld);
  CHECK(apply_suggestion(ctl, yes, g, pens, spec, s, params).kind == ApplyKind::kPenalty);
  CHECK(apply_suggestion(ctl, yes, g, pens, spec, s, params).kind == ApplyKind::kPenalty);
  REQUIRE(pens.size() == 1);
  CHECK(pens[0].action == 5);
  CHECK(pens[0].magnitude <= params.penalty_cap);
}

TEST_CASE("http request bodies and response parsing") {
  HttpProviderConfig cfg;
  cfg.model = "m";
  cfg.prompt_template = "E={env_description} P={phase}";
  HttpProvider hp(cfg);
  QueryContext ctx;
  ctx.env_description = "room";
  ctx.phase = make_phase(Entity::kDoor, Verb::kToggle);
  const std::string body = hp.request_body(ctx, 3);
  CHECK(body.find("\"n\":3") != std::string::npos);
  CHECK(body.find("\"logprobs\":true") != std::string::npos);
  CHECK(body.find("E=room") != std::string::npos);
  CHECK(body.find("{phase}") == std::string::npos);

  const std::string resp = R"({"choices":[
    {"message":{"content":"a"},"logprobs":{"content":[{"logprob":-0.1},{"logprob":-0.2}]}},
    {"message":{"content":"b"}}]})";
  const auto cs = HttpProvider::parse_response(resp);
  REQUIRE(cs.size() == 2);
  CHECK(cs[0].text == "a");
  CHECK(cs[0].logprobs == std::vector<double>{-0.1, -0.2});
  CHECK(cs[1].logprobs.empty());
  CHECK_THROWS_AS(HttpProvider::parse_response("{}"), TransportError);
  CHECK_THROWS_AS(HttpProvider::parse_response("<html>"), TransportError);
}

TEST_CASE("offline priors for the lake are two safe paths under the final goal") {
  const GridSpec spec = lake_8x8(2.0 / 3.0);
  MemoryGraph g;
  seed_goals(g, spec);
  QueryBudget b;
  const std::vector<std::uint64_t> seeds = {0};
  CHECK(add_offline_priors(g, spec, seeds, {"goal"}, 0.8, "g0", b) == 2);
  CHECK(g.size() == 2);
  for (const auto& n : g.trajectory_nodes()) {
    CHECK(n.zeta == "g0");
    CHECK(n.source == Source::kOfflineLlm);
    CHECK(n.r_hat > 0.0);
  }
  CHECK(b.offline_used > 0);
}

TEST_CASE("shipped prompt templates fill every placeholder") {
  int seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(MIRA_PROMPT_DIR)) {
    std::ifstream in(entry.path());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string tmpl = ss.str();
    QueryContext ctx;
    ctx.env_description = "ENV-DESC";
    ctx.phase = make_phase(Entity::kKey, Verb::kNavigate);
    const std::string out = render_prompt(tmpl, ctx);
    CAPTURE(entry.path().string());
    CHECK(out.find("ENV-DESC") != std::string::npos);
    CHECK(out.find(ctx.phase.str()) != std::string::npos);
    for (const char* key : {"{env_description}", "{observations}", "{phase}"}) CHECK(out.find(key) == std::string::npos);
    ++seen;
  }
  CHECK(seen >= 3);
}
