#include "mira/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mira/utility.hpp"

namespace mira {

using json = nlohmann::json;

// ---- suggestions ----------------------------------------------------------

std::string Suggestion::canonical() const {
  std::string out;
  if (kind == SuggestionKind::kControl) return "control:" + std::to_string(control_action);
  out = "plan:";
  for (size_t i = 0; i < actions.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(actions[i]);
  }
  return out;
}

namespace {

std::optional<int> action_from_json(const json& j, Family family) {
  if (j.is_number_integer()) {
    const int a = j.get<int>();
    if (a < 0 || a >= action_count(family)) return std::nullopt;
    return a;
  }
  if (j.is_string()) return parse_action(family, j.get<std::string>());
  return std::nullopt;
}

}  // namespace

std::optional<Suggestion> parse_suggestion(const Completion& c, Family family,
                                           const std::string& provider_id) {
  const auto open = c.text.find('{');
  const auto close = c.text.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  const json j = json::parse(c.text.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    return std::nullopt;
  }
  Suggestion s;
  s.raw_text = c.text;
  s.provider_id = provider_id;
  if (!c.logprobs.empty()) s.logprobs = c.logprobs;
  const std::string type = j["type"].get<std::string>();
  if (type == "plan") {
    s.kind = SuggestionKind::kPlan;
    if (!j.contains("actions") || !j["actions"].is_array() || j["actions"].empty()) return std::nullopt;
    for (const auto& a : j["actions"]) {
      const auto act = action_from_json(a, family);
      if (!act) return std::nullopt;
      s.actions.push_back(*act);
    }
    if (j.contains("subgoal") && j["subgoal"].is_string()) s.subgoal = j["subgoal"].get<std::string>();
    return s;
  }
  if (type == "control") {
    s.kind = SuggestionKind::kControl;
    if (!j.contains("action")) return std::nullopt;
    const auto act = action_from_json(j["action"], family);
    if (!act) return std::nullopt;
    s.control_action = *act;
    return s;
  }
  return std::nullopt;
}

std::string suggestion_to_text(const Suggestion& s, Family family) {
  json j;
  if (s.kind == SuggestionKind::kPlan) {
    j["type"] = "plan";
    j["subgoal"] = s.subgoal;
    json acts = json::array();
    for (int a : s.actions) acts.push_back(std::string(action_name(family, a)));
    j["actions"] = acts;
  } else {
    j["type"] = "control";
    j["action"] = std::string(action_name(family, s.control_action));
  }
  return j.dump();
}

// ---- screening ------------------------------------------------------------

ScreeningResult screen_by_likelihood(const Suggestion& s, double threshold) {
  if (!s.logprobs || s.logprobs->empty()) {
    throw std::invalid_argument("screen_by_likelihood: suggestion has no token log-probs");
  }
  double sum = 0.0;
  for (double lp : *s.logprobs) sum += lp;
  ScreeningResult r;
  r.method = ScreenMethod::kLikelihood;
  r.score = std::exp(sum / static_cast<double>(s.logprobs->size()));
  r.accepted = r.score + 1e-12 >= threshold;
  return r;
}

namespace {

struct Vote {
  std::map<std::string, std::vector<size_t>> classes;
  std::vector<std::optional<Suggestion>> parsed;
  std::string best_key;
  size_t best_size = 0;
};

Vote tally(std::span<const Completion> completions, Family family, const std::string& provider) {
  Vote v;
  for (size_t i = 0; i < completions.size(); ++i) {
    v.parsed.push_back(parse_suggestion(completions[i], family, provider));
    if (v.parsed.back()) v.classes[v.parsed.back()->canonical()].push_back(i);
  }
  // std::map iterates keys in order, so ties go to the smallest key.
  for (const auto& [key, members] : v.classes) {
    if (members.size() > v.best_size) {
      v.best_size = members.size();
      v.best_key = key;
    }
  }
  return v;
}

}  // namespace

ScreenOutcome screen_by_consistency(std::span<const Completion> completions, Family family,
                                    double threshold, const std::string& provider_id) {
  if (completions.size() < 2) {
    throw std::invalid_argument("screen_by_consistency: need at least two completions");
  }
  const Vote v = tally(completions, family, provider_id);
  ScreenOutcome out;
  out.result.method = ScreenMethod::kConsistency;
  out.result.score = static_cast<double>(v.best_size) / static_cast<double>(completions.size());
  out.result.accepted = v.best_size > 0 && out.result.score + 1e-12 >= threshold;
  if (out.result.accepted) out.suggestion = v.parsed[v.classes.at(v.best_key).front()];
  return out;
}

ScreenOutcome screen(std::span<const Completion> completions, Family family,
                     const ScreeningConfig& cfg, const std::string& provider_id) {
  ScreenOutcome out;
  if (completions.empty()) return out;
  if (!cfg.enabled) {
    const Vote v = tally(completions, family, provider_id);
    out.result.method = ScreenMethod::kDisabled;
    for (size_t i = 0; i < v.parsed.size(); ++i) {
      if (!v.parsed[i]) continue;
      out.suggestion = v.parsed[i];
      out.result.accepted = true;
      out.result.score = static_cast<double>(v.classes.at(v.parsed[i]->canonical()).size()) /
                         static_cast<double>(completions.size());
      break;
    }
    return out;
  }
  if (!completions.front().logprobs.empty()) {
    auto s = parse_suggestion(completions.front(), family, provider_id);
    out.result.method = ScreenMethod::kLikelihood;
    if (!s) return out;
    out.result = screen_by_likelihood(*s, cfg.likelihood_threshold);
    if (out.result.accepted) out.suggestion = std::move(s);
    return out;
  }
  if (completions.size() < 2) {
    out.result.method = ScreenMethod::kConsistency;
    return out;
  }
  return screen_by_consistency(completions, family, cfg.consistency_threshold, provider_id);
}

// ---- trigger and budget ---------------------------------------------------

bool TriggerState::check(double episode_utility_sum) {
  if (episode_utility_sum > 0.0) {
    counter = 0;
    return false;
  }
  ++counter;
  if (counter >= threshold) {
    counter = 0;
    return true;
  }
  return false;
}

void QueryBudget::charge_online() {
  if (!online_available()) {
    throw BudgetExhausted("online query budget exhausted (" + std::to_string(online_used) + " used)");
  }
  ++online_used;
}

// ---- context --------------------------------------------------------------

namespace {

char view_char(ViewTag t) {
  switch (t) {
    case ViewTag::kUnseen: return '?';
    case ViewTag::kEmpty: return '.';
    case ViewTag::kWall: return 'W';
    case ViewTag::kDoorOpen: return '_';
    case ViewTag::kDoorClosed: return 'd';
    case ViewTag::kDoorLocked: return 'D';
    case ViewTag::kKey: return 'K';
    case ViewTag::kBall: return 'b';
    case ViewTag::kRedBall: return 'R';
    case ViewTag::kBox: return 'X';
    case ViewTag::kGoal: return 'G';
    case ViewTag::kLava: return 'L';
  }
  return '?';
}

std::string lake_map_text(const GridSpec& spec) {
  std::string out;
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      const Pos p{r, c};
      const Tile& t = spec.layout[static_cast<size_t>(r * spec.width + c)];
      if (spec.start && *spec.start == p) {
        out += 'S';
      } else if (t.type == CellType::kHole) {
        out += 'H';
      } else if (t.type == CellType::kGoal) {
        out += 'G';
      } else if (t.type == CellType::kWall) {
        out += 'W';
      } else {
        out += 'F';
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace

std::string QueryContext::observations_text() const {
  std::ostringstream os;
  if (family == Family::kTabular) {
    os << "recent states:";
    for (int p : positions) os << ' ' << p;
    os << '\n';
    return os.str();
  }
  for (size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    os << "observation " << i << " (agent at bottom centre, facing up):\n";
    for (int r = 0; r < v.size; ++r) {
      for (int c = 0; c < v.size; ++c) {
        os << (r == v.size - 1 && c == v.size / 2 ? '^' : view_char(v.at(r, c)));
      }
      os << '\n';
    }
  }
  return os.str();
}

std::string QueryContext::serialize() const {
  return "environment:\n" + env_description + "\nphase: " + phase.str() + "\n" +
         observations_text();
}

std::string QueryContext::hash() const {
  std::ostringstream os;
  os << std::hex << fnv1a(serialize());
  return os.str();
}

std::string describe_environment(const GridSpec& spec) {
  std::ostringstream os;
  if (spec.family == Family::kTabular) {
    os << "FrozenLake grid (S start, F frozen, H hole, G goal). Actions: 0=left, 1=down, "
          "2=right, 3=up. Moves off the grid keep the agent in place.\n";
    if (!spec.layout.empty()) os << lake_map_text(spec);
    return os.str();
  }
  switch (spec.kind) {
    case LayoutKind::kDoorKey:
    case LayoutKind::kDistractedDoorKey:
      os << "A room split by a wall with a locked door. Pick up the key, open the door, and "
            "reach the goal square.";
      break;
    case LayoutKind::kRedBall: os << "Pick up the red ball. Picking up anything else fails."; break;
    case LayoutKind::kLavaCrossing: os << "Reach the goal square without stepping into lava."; break;
    case LayoutKind::kFixed: os << "Reach the goal square."; break;
  }
  os << " Actions: turn-left, turn-right, forward, pickup, drop, toggle, done. Symbols: ? unseen, "
        ". empty, W wall, _ open door, d closed door, D locked door, K key, b ball, R red ball, "
        "X box, G goal, L lava.";
  return os.str();
}

QueryContext build_context(const GridSpec& spec, const EpisodeRecord& episode,
                           const SubgoalPhase& phase) {
  QueryContext ctx;
  ctx.family = spec.family;
  ctx.env_description = describe_environment(spec);
  ctx.phase = phase;
  if (spec.family == Family::kTabular) {
    ctx.lake_map = spec;
    ctx.positions.push_back(episode.anchor.agent_pos.row * episode.anchor.width +
                            episode.anchor.agent_pos.col);
  } else {
    ctx.views = episode.recent_views;
  }
  return ctx;
}

std::string render_prompt(const std::string& tmpl, const QueryContext& ctx) {
  std::string out = tmpl;
  auto replace_all = [&out](const std::string& key, const std::string& value) {
    for (size_t pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
      out.replace(pos, key.size(), value);
    }
  };
  replace_all("{env_description}", ctx.env_description);
  replace_all("{observations}", ctx.observations_text());
  replace_all("{phase}", ctx.phase.str());
  return out;
}

// ---- planning -------------------------------------------------------------

namespace {

bool enterable(const Tile& t, bool is_target) {
  if (t.type == CellType::kHole) return false;
  if (t.type == CellType::kGoal) return is_target;
  return t.type == CellType::kFloor || (t.type == CellType::kDoor && t.door == DoorState::kOpen);
}

int move_action(Pos from, Pos to) {
  if (to.col < from.col) return static_cast<int>(LakeAction::kLeft);
  if (to.row > from.row) return static_cast<int>(LakeAction::kDown);
  if (to.col > from.col) return static_cast<int>(LakeAction::kRight);
  return static_cast<int>(LakeAction::kUp);
}

// BFS over lake cells avoiding holes and banned moves; returns the cell path.
std::optional<std::vector<Pos>> lake_bfs(const EnvState& s, Pos from, Pos to,
                                         const std::vector<bool>& banned_cells,
                                         const std::vector<std::pair<Pos, Pos>>& banned_moves) {
  const int W = s.width;
  auto idx = [W](Pos p) { return static_cast<size_t>(p.row * W + p.col); };
  std::vector<int> prev(static_cast<size_t>(W * s.height), -2);
  std::deque<Pos> q{from};
  prev[idx(from)] = -1;
  const Pos moves[4] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
  while (!q.empty()) {
    const Pos p = q.front();
    q.pop_front();
    if (p == to) break;
    if (!(p == from) && s.at(p).type == CellType::kGoal) continue;
    for (const Pos& d : moves) {
      const Pos n = p + d;
      if (!s.in_bounds(n) || prev[idx(n)] != -2 || banned_cells[idx(n)]) continue;
      if (s.at(n).type == CellType::kHole || s.at(n).type == CellType::kWall) continue;
      if (std::find(banned_moves.begin(), banned_moves.end(), std::make_pair(p, n)) != banned_moves.end()) {
        continue;
      }
      prev[idx(n)] = static_cast<int>(idx(p));
      q.push_back(n);
    }
  }
  if (prev[idx(to)] == -2) return std::nullopt;
  std::vector<Pos> path;
  for (int i = static_cast<int>(idx(to)); i != -1; i = prev[static_cast<size_t>(i)]) {
    path.push_back({i / W, i % W});
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<int> path_actions(const std::vector<Pos>& path) {
  std::vector<int> out;
  for (size_t i = 0; i + 1 < path.size(); ++i) out.push_back(move_action(path[i], path[i + 1]));
  return out;
}

int interaction_for(const Tile& t) {
  return static_cast<int>(t.type == CellType::kDoor ? GridAction::kToggle : GridAction::kPickup);
}

}  // namespace

std::optional<std::vector<int>> plan_to(const GridSpec& spec, const EnvState& s, Pos target,
                                        bool interact) {
  if (!s.in_bounds(target)) return std::nullopt;
  if (spec.family == Family::kTabular) {
    std::vector<bool> none(s.tiles.size(), false);
    auto path = lake_bfs(s, s.agent_pos, target, none, {});
    if (!path) return std::nullopt;
    return path_actions(*path);
  }
  // BFS over (row, col, dir).
  const int W = s.width;
  const int H = s.height;
  auto key = [W](Pos p, int d) { return static_cast<size_t>((p.row * W + p.col) * 4 + d); };
  struct Prev {
    int from = -2;
    int action = -1;
  };
  std::vector<Prev> prev(static_cast<size_t>(W * H * 4));
  std::deque<std::pair<Pos, int>> q;
  q.push_back({s.agent_pos, s.agent_dir});
  prev[key(s.agent_pos, s.agent_dir)].from = -1;
  auto done = [&](Pos p, int d) {
    return interact ? (p + dir_vec(d)) == target : p == target;
  };
  std::optional<std::pair<Pos, int>> found;
  while (!q.empty()) {
    const auto [p, d] = q.front();
    q.pop_front();
    if (done(p, d)) {
      found = {p, d};
      break;
    }
    if (!(p == s.agent_pos) && s.at(p).type == CellType::kGoal) continue;
    const std::pair<Pos, int> next[3] = {
        {p + dir_vec(d), d}, {p, (d + 3) % 4}, {p, (d + 1) % 4}};
    const int acts[3] = {static_cast<int>(GridAction::kForward),
                         static_cast<int>(GridAction::kTurnLeft),
                         static_cast<int>(GridAction::kTurnRight)};
    for (int i = 0; i < 3; ++i) {
      const auto [np, nd] = next[i];
      if (!s.in_bounds(np)) continue;
      if (i == 0 && !enterable(s.at(np), !interact && np == target)) continue;
      auto& slot = prev[key(np, nd)];
      if (slot.from != -2) continue;
      slot.from = static_cast<int>(key(p, d));
      slot.action = acts[i];
      q.push_back({np, nd});
    }
  }
  if (!found) return std::nullopt;
  std::vector<int> actions;
  for (int k = static_cast<int>(key(found->first, found->second)); prev[static_cast<size_t>(k)].from != -1;
       k = prev[static_cast<size_t>(k)].from) {
    actions.push_back(prev[static_cast<size_t>(k)].action);
  }
  std::reverse(actions.begin(), actions.end());
  if (interact) actions.push_back(interaction_for(s.at(target)));
  return actions;
}

std::vector<std::vector<int>> lake_safe_paths(const GridSpec& spec, const EnvState& start) {
  std::vector<std::vector<int>> out;
  const auto goal = start.find(CellType::kGoal);
  if (!goal) return out;
  std::vector<bool> none(start.tiles.size(), false);
  const auto best = lake_bfs(start, start.agent_pos, *goal, none, {});
  if (!best) return out;
  out.push_back(path_actions(*best));
  // Second best: Yen's spur paths off the best one.
  std::optional<std::vector<Pos>> second;
  for (size_t i = 0; i + 1 < best->size(); ++i) {
    std::vector<bool> banned(start.tiles.size(), false);
    for (size_t j = 0; j < i; ++j) {
      banned[static_cast<size_t>((*best)[j].row * start.width + (*best)[j].col)] = true;
    }
    const auto spur = lake_bfs(start, (*best)[i], *goal, banned, {{(*best)[i], (*best)[i + 1]}});
    if (!spur) continue;
    std::vector<Pos> cand(best->begin(), best->begin() + static_cast<std::ptrdiff_t>(i));
    cand.insert(cand.end(), spur->begin(), spur->end());
    if (!second || cand.size() < second->size()) second = std::move(cand);
  }
  if (second) out.push_back(path_actions(*second));
  (void)spec;
  return out;
}

std::optional<std::vector<AnnotatedTransition>> simulate_plan(const GridSpec& spec,
                                                              const EnvState& from,
                                                              std::span<const int> actions,
                                                              EnvState* end_state) {
  GridSpec det = spec;
  det.slip_prob = 0.0;
  det.max_steps = std::max(spec.max_steps, from.step_count + static_cast<int>(actions.size()) + 1);
  EnvState s = from;
  s.done = false;
  Rng unused(0);
  std::vector<AnnotatedTransition> seg;
  for (int a : actions) {
    if (a < 0 || a >= action_count(spec.family)) return std::nullopt;
    AnnotatedTransition t;
    t.position = s.agent_pos;
    if (spec.family == Family::kGridworld) t.direction = s.agent_dir;
    t.action = a;
    t.phase = subgoal_phase(spec, s);
    seg.push_back(t);
    step(det, s, a, unused);
    if (s.done) break;
  }
  if (end_state) *end_state = s;
  return seg;
}

// ---- oracle provider ------------------------------------------------------

namespace {

Tile tile_of(ViewTag t) {
  Tile out;
  switch (t) {
    case ViewTag::kUnseen:
    case ViewTag::kWall: out.type = CellType::kWall; break;
    case ViewTag::kEmpty: out.type = CellType::kFloor; break;
    case ViewTag::kDoorOpen:
      out = {CellType::kDoor, Color::kYellow, DoorState::kOpen};
      break;
    case ViewTag::kDoorClosed:
      out = {CellType::kDoor, Color::kYellow, DoorState::kClosed};
      break;
    case ViewTag::kDoorLocked:
      out = {CellType::kDoor, Color::kYellow, DoorState::kLocked};
      break;
    case ViewTag::kKey: out = {CellType::kKey, Color::kYellow, DoorState::kClosed}; break;
    case ViewTag::kBall: out = {CellType::kBall, Color::kBlue, DoorState::kClosed}; break;
    case ViewTag::kRedBall: out = {CellType::kBall, Color::kRed, DoorState::kClosed}; break;
    case ViewTag::kBox: out.type = CellType::kBox; break;
    case ViewTag::kGoal: out.type = CellType::kGoal; break;
    case ViewTag::kLava: out.type = CellType::kHole; break;
  }
  return out;
}

// The window as a tiny world: agent at the bottom centre facing north.
EnvState window_state(const EgocentricView& v) {
  EnvState s;
  s.width = v.size;
  s.height = v.size;
  s.tiles.resize(v.cells.size());
  for (size_t i = 0; i < v.cells.size(); ++i) s.tiles[i] = tile_of(v.cells[i]);
  s.agent_pos = {v.size - 1, v.size / 2};
  s.agent_dir = 3;
  s.at(s.agent_pos) = Tile{};
  return s;
}

std::optional<Pos> find_tag(const EgocentricView& v, ViewTag a, ViewTag b = ViewTag::kUnseen,
                            ViewTag c = ViewTag::kUnseen) {
  for (int r = 0; r < v.size; ++r) {
    for (int col = 0; col < v.size; ++col) {
      const ViewTag t = v.at(r, col);
      if (t == a || (b != ViewTag::kUnseen && t == b) || (c != ViewTag::kUnseen && t == c)) {
        return Pos{r, col};
      }
    }
  }
  return std::nullopt;
}

std::string phase_description(const SubgoalPhase& p) {
  if (p.entity == Entity::kKey) return "Go to key and pick it up";
  if (p.entity == Entity::kDoor) return "Toggle door";
  if (p.entity == Entity::kBall) return "Pick up the red ball";
  return "Go to goal";
}

}  // namespace

Suggestion OracleProvider::answer(const QueryContext& ctx) const {
  Suggestion s;
  s.provider_id = id();
  if (ctx.family == Family::kTabular) {
    s.kind = SuggestionKind::kPlan;
    s.subgoal = "Go to goal";
    const GridSpec& m = ctx.lake_map;
    if (!ctx.positions.empty() && !m.layout.empty()) {
      EnvState st;
      st.width = m.width;
      st.height = m.height;
      st.tiles = m.layout;
      const int p = ctx.positions.back();
      st.agent_pos = {p / m.width, p % m.width};
      if (auto g = st.find(CellType::kGoal)) {
        if (auto plan = plan_to(m, st, *g, false)) s.actions = *plan;
      }
    }
    if (s.actions.empty()) {
      s.kind = SuggestionKind::kControl;
      s.control_action = static_cast<int>(LakeAction::kUp);
    }
    return s;
  }
  GridSpec wspec;
  wspec.family = Family::kGridworld;
  wspec.max_steps = 1000;
  const EgocentricView* view = ctx.views.empty() ? nullptr : &ctx.views.back();
  std::optional<Pos> target;
  bool interact = true;
  if (view) {
    if (ctx.phase.entity == Entity::kKey) {
      target = find_tag(*view, ViewTag::kKey);
    } else if (ctx.phase.entity == Entity::kDoor) {
      target = find_tag(*view, ViewTag::kDoorLocked, ViewTag::kDoorClosed);
    } else {
      target = find_tag(*view, ViewTag::kGoal);
      interact = false;
      if (!target) {
        target = find_tag(*view, ViewTag::kRedBall);
        interact = true;
      }
    }
  }
  if (target) {
    const EnvState w = window_state(*view);
    if (auto plan = plan_to(wspec, w, *target, interact); plan && !plan->empty()) {
      s.kind = SuggestionKind::kPlan;
      s.actions = *plan;
      s.subgoal = phase_description(ctx.phase);
      return s;
    }
  }
  // Nothing useful in view: discourage the action that cannot help this phase.
  s.kind = SuggestionKind::kControl;
  if (ctx.phase.entity == Entity::kKey) {
    s.control_action = static_cast<int>(GridAction::kToggle);
  } else if (ctx.phase.entity == Entity::kDoor) {
    s.control_action = static_cast<int>(GridAction::kDrop);
  } else {
    s.control_action = static_cast<int>(GridAction::kDone);
  }
  return s;
}

std::vector<Completion> OracleProvider::complete(const QueryContext& ctx, int k, Rng& rng) {
  const Suggestion clean = answer(ctx);
  const std::string clean_text = suggestion_to_text(clean, ctx.family);
  std::vector<Completion> out;
  for (int i = 0; i < k; ++i) {
    if (corruption_rate_ > 0.0 && rng.uniform() < corruption_rate_) {
      Suggestion bad;
      bad.kind = SuggestionKind::kPlan;
      bad.subgoal = clean.kind == SuggestionKind::kPlan ? clean.subgoal : phase_description(ctx.phase);
      const int len = 3 + static_cast<int>(rng.below(6));
      for (int j = 0; j < len; ++j) {
        bad.actions.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(action_count(ctx.family)))));
      }
      out.push_back({suggestion_to_text(bad, ctx.family), {}});
    } else {
      out.push_back({clean_text, {}});
    }
  }
  return out;
}

// ---- fixture provider -----------------------------------------------------

FixtureProvider::FixtureProvider(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open fixture file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw ConfigError("fixture file is not a JSON list: " + path);
  for (const auto& rec : j) {
    if (!rec.is_object() || !rec.contains("context_hash") || !rec.contains("completions") ||
        !rec["completions"].is_array()) {
      throw ConfigError("fixture record needs context_hash and completions: " + path);
    }
    std::vector<Completion> cs;
    for (const auto& c : rec["completions"]) {
      Completion comp;
      if (c.is_string()) {
        comp.text = c.get<std::string>();
      } else if (c.is_object() && c.contains("text")) {
        comp.text = c["text"].get<std::string>();
        if (c.contains("logprobs")) comp.logprobs = c["logprobs"].get<std::vector<double>>();
      } else {
        throw ConfigError("fixture completion must be a string or {text, logprobs}: " + path);
      }
      cs.push_back(std::move(comp));
    }
    records_[rec["context_hash"].get<std::string>()] = std::move(cs);
  }
}

std::vector<Completion> FixtureProvider::complete(const QueryContext& ctx, int k, Rng&) {
  const auto it = records_.find(ctx.hash());
  if (it == records_.end()) throw TransportError("no recorded completion for context " + ctx.hash());
  std::vector<Completion> out = it->second;
  if (k > 0 && static_cast<size_t>(k) < out.size()) out.resize(static_cast<size_t>(k));
  return out;
}

std::string FixtureProvider::to_json(const std::map<std::string, std::vector<Completion>>& records) {
  json j = json::array();
  for (const auto& [hash, cs] : records) {
    json list = json::array();
    for (const auto& c : cs) list.push_back({{"text", c.text}, {"logprobs", c.logprobs}});
    j.push_back({{"context_hash", hash}, {"completions", list}});
  }
  return j.dump(2);
}

// ---- grafting ---------------------------------------------------------------

ApplyOutcome apply_suggestion(const Suggestion& s, const ScreeningResult& screening,
                              MemoryGraph& graph, std::vector<LogitPenalty>& penalties,
                              const GridSpec& spec, const EnvState& anchor,
                              const ApplyParams& params) {
  ApplyOutcome out;
  if (!screening.accepted) {
    out.note = "rejected by screening";
    return out;
  }
  if (s.kind == SuggestionKind::kControl) {
    if (s.control_action < 0 || s.control_action >= action_count(spec.family)) {
      out.note = "invalid control action";
      return out;
    }
    const SubgoalPhase phase = subgoal_phase(spec, anchor);
    LogitPenalty pen{anchor.layout_id, phase, s.control_action,
                     std::clamp(params.penalty_magnitude, 0.0, params.penalty_cap), params.penalty_steps};
    auto it = std::find_if(penalties.begin(), penalties.end(), [&](const LogitPenalty& p) {
      return p.layout_id == pen.layout_id && p.phase == pen.phase;
    });
    if (it == penalties.end()) {
      penalties.push_back(pen);
    } else {
      *it = pen;
    }
    out.kind = ApplyKind::kPenalty;
    out.note = "penalty on " + std::string(action_name(spec.family, s.control_action)) + " during " +
               phase.str();
    return out;
  }
  SubgoalPhase tokens;
  try {
    tokens = tokenize_subgoal(s.subgoal.empty() ? "go to goal" : s.subgoal);
  } catch (const ConfigError& e) {
    out.note = e.what();
    return out;
  }
  auto seg = simulate_plan(spec, anchor, s.actions);
  if (!seg || seg->empty()) {
    out.note = "plan contains an invalid action";
    return out;
  }
  std::string zeta;
  for (const auto& g : graph.final_goals()) {
    if (g.tokens == tokens) zeta = g.id;
  }
  if (zeta.empty()) zeta = graph.ensure_subgoal(s.subgoal, params.final_goal);
  const auto target = phase_target(spec, anchor, tokens);
  const double r_hat = target ? estimate_subgoal_reward(spec, anchor, *seg, *target) : 0.0;
  InsertRequest req;
  req.layout_id = anchor.layout_id;
  req.segment = std::move(*seg);
  req.zeta = zeta;
  req.r_hat = r_hat;
  req.confidence = std::clamp(screening.score, 0.0, 1.0);
  req.source = Source::kOnlineLlm;
  req.screened = true;
  req.episode = params.episode;
  out.insert = graph.insert_or_update(req);
  out.kind = ApplyKind::kGrafted;
  out.note = "plan of " + std::to_string(req.segment.size()) + " steps for " + zeta;
  return out;
}

void seed_goals(MemoryGraph& graph, const GridSpec& spec, const std::string& final_goal) {
  if (!graph.has_zeta(final_goal)) graph.add_final_goal(final_goal, "Go to goal");
  if (spec.family == Family::kGridworld &&
      (spec.kind == LayoutKind::kDoorKey || spec.kind == LayoutKind::kDistractedDoorKey)) {
    graph.ensure_subgoal("Go to key", final_goal);
    graph.ensure_subgoal("Toggle door", final_goal);
  }
}

int add_offline_priors(MemoryGraph& graph, const GridSpec& spec,
                       std::span<const std::uint64_t> layout_seeds,
                       const std::vector<std::string>& phases, double confidence,
                       const std::string& final_goal, QueryBudget& budget) {
  seed_goals(graph, spec, final_goal);
  int changed = 0;
  auto wanted = [&](const std::string& entity) {
    return std::find(phases.begin(), phases.end(), entity) != phases.end();
  };
  auto offer = [&](const EnvState& at, std::vector<AnnotatedTransition> seg, const std::string& zeta,
                   Pos target) {
    if (seg.empty()) return;
    InsertRequest req;
    req.layout_id = at.layout_id;
    req.r_hat = estimate_subgoal_reward(spec, at, seg, target);
    req.segment = std::move(seg);
    req.zeta = zeta;
    req.confidence = confidence;
    req.source = Source::kOfflineLlm;
    req.episode = 0;
    const auto r = graph.insert_or_update(req);
    if (r.outcome == InsertOutcome::kCreated || r.outcome == InsertOutcome::kReplaced) ++changed;
  };
  for (std::uint64_t seed : layout_seeds) {
    auto [state, obs] = reset(spec, seed);
    budget.charge_offline();
    if (spec.family == Family::kTabular) {
      const auto goal = state.find(CellType::kGoal);
      if (!goal) continue;
      for (const auto& path : lake_safe_paths(spec, state)) {
        auto seg = simulate_plan(spec, state, path);
        if (seg) offer(state, std::move(*seg), final_goal, *goal);
      }
      continue;
    }
    // Solve the layout stage by stage with full knowledge.
    EnvState s = state;
    const auto key = s.find(CellType::kKey);
    const auto door = s.find(CellType::kDoor);
    if (key && door && (spec.kind == LayoutKind::kDoorKey || spec.kind == LayoutKind::kDistractedDoorKey)) {
      auto plan = plan_to(spec, s, *key, true);
      if (!plan) continue;
      EnvState after;
      auto seg = simulate_plan(spec, s, *plan, &after);
      if (!seg) continue;
      if (wanted("key")) offer(s, *seg, graph.ensure_subgoal("Go to key", final_goal), *key);
      s = after;
      plan = plan_to(spec, s, *door, true);
      if (!plan) continue;
      seg = simulate_plan(spec, s, *plan, &after);
      if (!seg) continue;
      if (wanted("door")) offer(s, *seg, graph.ensure_subgoal("Toggle door", final_goal), *door);
      s = after;
    }
    const SubgoalPhase goal_phase = make_phase(Entity::kGoal, Verb::kNavigate);
    const auto target = phase_target(spec, s, goal_phase);
    if (!target || !wanted("goal")) continue;
    const bool interact = s.at(*target).type != CellType::kGoal;
    const auto plan = plan_to(spec, s, *target, interact);
    if (!plan) continue;
    auto seg = simulate_plan(spec, s, *plan);
    if (seg) offer(s, std::move(*seg), final_goal, *target);
  }
  return changed;
}

}  // namespace mira
