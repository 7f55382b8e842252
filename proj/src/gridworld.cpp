#include "mira/gridworld.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mira {

namespace {

constexpr const char* kLake8x8[] = {
    "SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF",
    "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG",
};

Tile tile(CellType t, Color c = Color::kGrey, DoorState d = DoorState::kClosed) {
  return Tile{t, c, d};
}

bool blocks_movement(const Tile& t) {
  switch (t.type) {
    case CellType::kWall:
    case CellType::kKey:
    case CellType::kBall:
    case CellType::kBox:
      return true;
    case CellType::kDoor:
      return t.door != DoorState::kOpen;
    default:
      return false;
  }
}

bool opaque(const Tile& t) {
  return t.type == CellType::kWall || (t.type == CellType::kDoor && t.door != DoorState::kOpen);
}

// Passability for planning distances: closed doors can be opened, locked doors
// only with a key in hand, hazards are never entered.
bool passable_for_bfs(const EnvState& s, const Tile& t) {
  switch (t.type) {
    case CellType::kFloor:
    case CellType::kGoal:
      return true;
    case CellType::kDoor:
      return t.door != DoorState::kLocked ||
             (s.carrying && s.carrying->type == CellType::kKey);
    default:
      return false;
  }
}

class LayoutBuilder {
 public:
  LayoutBuilder(int w, int h, std::uint64_t seed) : w_(w), h_(h), rng_(seed) {
    tiles_.assign(static_cast<size_t>(w * h), tile(CellType::kFloor));
  }

  void walls_around() {
    for (int c = 0; c < w_; ++c) {
      set({0, c}, tile(CellType::kWall));
      set({h_ - 1, c}, tile(CellType::kWall));
    }
    for (int r = 0; r < h_; ++r) {
      set({r, 0}, tile(CellType::kWall));
      set({r, w_ - 1}, tile(CellType::kWall));
    }
  }
  void set(Pos p, Tile t) { tiles_[static_cast<size_t>(p.row * w_ + p.col)] = t; }
  const Tile& get(Pos p) const { return tiles_[static_cast<size_t>(p.row * w_ + p.col)]; }
  int rand_int(int lo, int hi) {  // [lo, hi)
    return lo + static_cast<int>(rng_.below(static_cast<std::uint64_t>(hi - lo)));
  }
  // Random empty floor cell in rows [r0, r1), cols [c0, c1), avoiding `avoid`.
  Pos place(int r0, int r1, int c0, int c1, const std::vector<Pos>& avoid) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      Pos p{rand_int(r0, r1), rand_int(c0, c1)};
      if (get(p).type != CellType::kFloor) continue;
      if (std::find(avoid.begin(), avoid.end(), p) != avoid.end()) continue;
      return p;
    }
    throw std::runtime_error("layout generation: no free cell");
  }
  Color rand_color(bool allow_red) {
    for (;;) {
      auto c = static_cast<Color>(rand_int(0, 6));
      if (allow_red || c != Color::kRed) return c;
    }
  }

  EnvState finish(Pos agent, int dir) {
    EnvState s;
    s.width = w_;
    s.height = h_;
    s.tiles = std::move(tiles_);
    s.agent_pos = agent;
    s.agent_dir = dir;
    return s;
  }

 private:
  int w_, h_;
  Rng rng_;
  std::vector<Tile> tiles_;
};

std::uint64_t hash_layout(const EnvState& s) {
  std::string bytes;
  bytes.reserve(s.tiles.size() * 3 + 32);
  auto put = [&bytes](int v) { bytes.append(reinterpret_cast<const char*>(&v), sizeof v); };
  put(s.width);
  put(s.height);
  for (const auto& t : s.tiles) {
    bytes.push_back(static_cast<char>(t.type));
    bytes.push_back(static_cast<char>(t.color));
    bytes.push_back(static_cast<char>(t.door));
  }
  put(s.agent_pos.row);
  put(s.agent_pos.col);
  put(s.agent_dir);
  return fnv1a(bytes);
}

EnvState generate(const GridSpec& spec, std::uint64_t seed) {
  const int w = spec.width;
  const int h = spec.height;
  LayoutBuilder b(w, h, derive_seed(spec.seed, seed));
  switch (spec.kind) {
    case LayoutKind::kFixed: {
      EnvState s;
      s.width = w;
      s.height = h;
      s.tiles = spec.layout;
      s.agent_pos = *spec.start;
      s.agent_dir = 0;
      return s;
    }
    case LayoutKind::kDoorKey:
    case LayoutKind::kDistractedDoorKey: {
      b.walls_around();
      const Pos goal{h - 2, w - 2};
      b.set(goal, tile(CellType::kGoal));
      const int split = b.rand_int(2, w - 2);
      for (int r = 0; r < h; ++r) b.set({r, split}, tile(CellType::kWall));
      const int door_row = b.rand_int(1, h - 2);
      b.set({door_row, split}, tile(CellType::kDoor, Color::kYellow, DoorState::kLocked));
      const Pos agent = b.place(1, h - 1, 1, split, {});
      const int dir = b.rand_int(0, 4);
      const Pos key = b.place(1, h - 1, 1, split, {agent});
      b.set(key, tile(CellType::kKey, Color::kYellow));
      if (spec.kind == LayoutKind::kDistractedDoorKey) {
        // One distractor per room, never in front of the door.
        const std::vector<Pos> keep_clear = {agent, Pos{door_row, split - 1},
                                             Pos{door_row, split + 1}};
        for (auto [c0, c1] : {std::pair{1, split}, std::pair{split + 1, w - 1}}) {
          const Pos p = b.place(1, h - 1, c0, c1, keep_clear);
          const auto kind = b.rand_int(0, 2) == 0 ? CellType::kBall : CellType::kBox;
          b.set(p, tile(kind, b.rand_color(true)));
        }
      }
      return b.finish(agent, dir);
    }
    case LayoutKind::kRedBall: {
      b.walls_around();
      const Pos agent = b.place(1, h - 1, 1, w - 1, {});
      const int dir = b.rand_int(0, 4);
      const Pos ball = b.place(1, h - 1, 1, w - 1, {agent});
      b.set(ball, tile(CellType::kBall, Color::kRed));
      for (int i = 0; i < 3; ++i) {
        const Pos p = b.place(1, h - 1, 1, w - 1, {agent});
        const auto kind = b.rand_int(0, 2) == 0 ? CellType::kBall : CellType::kBox;
        b.set(p, tile(kind, b.rand_color(false)));
      }
      return b.finish(agent, dir);
    }
    case LayoutKind::kLavaCrossing: {
      b.walls_around();
      b.set({h - 2, w - 2}, tile(CellType::kGoal));
      const bool vertical = b.rand_int(0, 2) == 0;
      const int span = vertical ? w : h;
      // River on an even line strictly inside the room, one gap.
      std::vector<int> lines;
      for (int i = 2; i < span - 2; i += 2) lines.push_back(i);
      const int line = lines[static_cast<size_t>(b.rand_int(0, static_cast<int>(lines.size())))];
      const int gap = b.rand_int(1, (vertical ? h : w) - 1);
      for (int i = 1; i < (vertical ? h : w) - 1; ++i) {
        if (i == gap) continue;
        b.set(vertical ? Pos{i, line} : Pos{line, i}, tile(CellType::kHole));
      }
      return b.finish(Pos{1, 1}, 0);
    }
  }
  throw std::logic_error("unknown layout kind");
}

}  // namespace

void GridSpec::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("grid: width and height must be positive");
  if (slip_prob < 0.0 || slip_prob > 1.0) throw ConfigError("grid: slip_prob must be in [0,1]");
  if (max_steps <= 0) throw ConfigError("grid: max_steps must be positive");
  if (view_size < 3 || view_size % 2 == 0) throw ConfigError("grid: view_size must be odd >= 3");
  if (kind == LayoutKind::kFixed) {
    if (layout.size() != static_cast<size_t>(width * height)) {
      throw ConfigError("grid: layout size does not match width*height");
    }
    if (!start) throw ConfigError("grid: layout needs exactly one start cell");
    if (std::none_of(layout.begin(), layout.end(),
                     [](const Tile& t) { return t.type == CellType::kGoal; })) {
      throw ConfigError("grid: layout needs at least one goal cell");
    }
  } else {
    if (family != Family::kGridworld) throw ConfigError("grid: generated layouts are gridworlds");
    const int min_size = kind == LayoutKind::kLavaCrossing ? 7 : 5;
    if (width < min_size || height < min_size) {
      throw ConfigError("grid: generated layout too small (min " + std::to_string(min_size) + ")");
    }
  }
}

GridSpec parse_layout(const std::string& text, Family family, int max_steps) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line.erase(std::remove_if(line.begin(), line.end(), [](char c) { return std::isspace(c); }),
               line.end());
    if (!line.empty()) rows.push_back(line);
  }
  if (rows.empty()) throw ConfigError("layout: empty");
  GridSpec spec;
  spec.family = family;
  spec.kind = LayoutKind::kFixed;
  spec.height = static_cast<int>(rows.size());
  spec.width = static_cast<int>(rows[0].size());
  spec.max_steps = max_steps;
  int starts = 0;
  for (int r = 0; r < spec.height; ++r) {
    if (static_cast<int>(rows[static_cast<size_t>(r)].size()) != spec.width) {
      throw ConfigError("layout: row " + std::to_string(r) + " has a different width");
    }
    for (int c = 0; c < spec.width; ++c) {
      const char ch = rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
      Tile t;
      switch (ch) {
        case 'S':
          ++starts;
          spec.start = Pos{r, c};
          break;
        case 'F': break;
        case 'H': t = tile(CellType::kHole); break;
        case 'G': t = tile(CellType::kGoal); break;
        case 'W': t = tile(CellType::kWall); break;
        case 'K': t = tile(CellType::kKey, Color::kYellow); break;
        case 'D': t = tile(CellType::kDoor, Color::kYellow, DoorState::kLocked); break;
        case 'B': t = tile(CellType::kBall, Color::kRed); break;
        case 'X': t = tile(CellType::kBox, Color::kBlue); break;
        default:
          throw ConfigError(std::string("layout: unknown cell code '") + ch + "' at row " +
                            std::to_string(r));
      }
      spec.layout.push_back(t);
    }
  }
  if (starts != 1) throw ConfigError("layout: expected exactly one S, found " + std::to_string(starts));
  spec.validate();
  return spec;
}

GridSpec load_layout_file(const std::string& path, Family family, int max_steps) {
  std::ifstream f(path);
  if (!f) throw ConfigError("layout file not found: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_layout(ss.str(), family, max_steps);
}

GridSpec lake_8x8(double slip_prob) {
  std::string text;
  for (const char* row : kLake8x8) text += std::string(row) + "\n";
  GridSpec spec = parse_layout(text, Family::kTabular, 200);
  spec.slip_prob = slip_prob;
  return spec;
}

GridSpec empty_lake(int width, int height) {
  std::string text;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      text += (r == 0 && c == 0) ? 'S' : (r == height - 1 && c == width - 1) ? 'G' : 'F';
    }
    text += '\n';
  }
  return parse_layout(text, Family::kTabular, 200);
}

GridSpec doorkey(int size, bool distractors) {
  GridSpec spec;
  spec.family = Family::kGridworld;
  spec.kind = distractors ? LayoutKind::kDistractedDoorKey : LayoutKind::kDoorKey;
  spec.width = spec.height = size;
  spec.max_steps = 300;
  return spec;
}

GridSpec redball(int size) {
  GridSpec spec = doorkey(size);
  spec.kind = LayoutKind::kRedBall;
  return spec;
}

GridSpec lava_crossing(int size) {
  GridSpec spec = doorkey(size);
  spec.kind = LayoutKind::kLavaCrossing;
  return spec;
}

std::optional<Pos> EnvState::find(CellType type) const {
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (at({r, c}).type == type) return Pos{r, c};
    }
  }
  return std::nullopt;
}

Pos dir_vec(int dir) {
  switch (dir & 3) {
    case 0: return {0, 1};
    case 1: return {1, 0};
    case 2: return {0, -1};
    default: return {-1, 0};
  }
}

std::pair<EnvState, Observation> reset(const GridSpec& spec, std::uint64_t seed) {
  spec.validate();
  EnvState s = generate(spec, seed);
  s.layout_id = hash_layout(s);
  Observation obs = observe(spec, s);
  return {std::move(s), std::move(obs)};
}

namespace {

Pos lake_move(Pos p, int action, int w, int h) {
  switch (action) {
    case 0: p.col = std::max(0, p.col - 1); break;
    case 1: p.row = std::min(h - 1, p.row + 1); break;
    case 2: p.col = std::min(w - 1, p.col + 1); break;
    case 3: p.row = std::max(0, p.row - 1); break;
    default: break;
  }
  return p;
}

double success_reward(const GridSpec& spec, const EnvState& s) {
  if (spec.family == Family::kTabular) return 1.0;
  return 1.0 - 0.9 * static_cast<double>(s.step_count) / static_cast<double>(spec.max_steps);
}

}  // namespace

StepResult step(const GridSpec& spec, EnvState& s, int action, Rng& rng) {
  if (s.done) throw std::logic_error("step called after the episode ended");
  if (action < 0 || action >= action_count(spec.family)) {
    throw std::invalid_argument("action " + std::to_string(action) + " out of range");
  }
  StepResult res;
  ++s.step_count;
  if (spec.family == Family::kTabular) {
    int realized = action;
    if (spec.slip_prob > 0.0 && rng.uniform() < spec.slip_prob) {
      // Perpendicular sides are equally likely.
      realized = rng.uniform() < 0.5 ? (action + 3) % 4 : (action + 1) % 4;
    }
    s.agent_pos = lake_move(s.agent_pos, realized, s.width, s.height);
    const auto type = s.at(s.agent_pos).type;
    if (type == CellType::kGoal) {
      res.success = true;
      res.reward = success_reward(spec, s);
      s.done = true;
    } else if (type == CellType::kHole) {
      s.done = true;
    }
  } else {
    const Pos front = s.agent_pos + dir_vec(s.agent_dir);
    const bool front_ok = s.in_bounds(front);
    switch (static_cast<GridAction>(action)) {
      case GridAction::kTurnLeft: s.agent_dir = (s.agent_dir + 3) % 4; break;
      case GridAction::kTurnRight: s.agent_dir = (s.agent_dir + 1) % 4; break;
      case GridAction::kForward:
        if (front_ok && !blocks_movement(s.at(front))) {
          s.agent_pos = front;
          const auto type = s.at(front).type;
          if (type == CellType::kGoal) {
            res.success = true;
            res.reward = success_reward(spec, s);
            s.done = true;
          } else if (type == CellType::kHole) {
            s.done = true;
          }
        }
        break;
      case GridAction::kPickup:
        if (front_ok && !s.carrying) {
          Tile& t = s.at(front);
          if (t.type == CellType::kKey || t.type == CellType::kBall || t.type == CellType::kBox) {
            const bool fetch_task = spec.kind == LayoutKind::kRedBall;
            const bool is_target = t.type == CellType::kBall && t.color == Color::kRed;
            s.carrying = t;
            t = tile(CellType::kFloor);
            if (fetch_task) {
              res.success = is_target;
              res.reward = is_target ? success_reward(spec, s) : 0.0;
              s.done = true;
            }
          }
        }
        break;
      case GridAction::kDrop:
        if (front_ok && s.carrying && s.at(front).type == CellType::kFloor) {
          s.at(front) = *s.carrying;
          s.carrying.reset();
        }
        break;
      case GridAction::kToggle:
        if (front_ok && s.at(front).type == CellType::kDoor) {
          Tile& d = s.at(front);
          if (d.door == DoorState::kLocked) {
            if (s.carrying && s.carrying->type == CellType::kKey && s.carrying->color == d.color) {
              d.door = DoorState::kOpen;
            }
          } else {
            d.door = d.door == DoorState::kOpen ? DoorState::kClosed : DoorState::kOpen;
          }
        }
        break;
      case GridAction::kDone: break;
    }
  }
  if (!s.done && s.step_count >= spec.max_steps) s.done = true;
  res.done = s.done;
  res.obs = observe(spec, s);
  return res;
}

namespace {

ViewTag tag_of(const Tile& t) {
  switch (t.type) {
    case CellType::kFloor: return ViewTag::kEmpty;
    case CellType::kHole: return ViewTag::kLava;
    case CellType::kWall: return ViewTag::kWall;
    case CellType::kDoor:
      return t.door == DoorState::kOpen     ? ViewTag::kDoorOpen
             : t.door == DoorState::kClosed ? ViewTag::kDoorClosed
                                            : ViewTag::kDoorLocked;
    case CellType::kKey: return ViewTag::kKey;
    case CellType::kBall: return t.color == Color::kRed ? ViewTag::kRedBall : ViewTag::kBall;
    case CellType::kBox: return ViewTag::kBox;
    case CellType::kGoal: return ViewTag::kGoal;
  }
  return ViewTag::kUnseen;
}

// Integer line walk from (0,0) to (dr,dc); true when no opaque cell lies
// strictly between the endpoints.
template <typename OpaqueAt>
bool line_of_sight(int dr, int dc, OpaqueAt&& opaque_at) {
  const int steps = std::max(std::abs(dr), std::abs(dc));
  for (int i = 1; i < steps; ++i) {
    // Round to nearest, ties away from zero; symmetric in sign.
    auto lerp = [&](int d) {
      const int num = 2 * d * i;
      const int den = 2 * steps;
      return num >= 0 ? (num + steps) / den : -((-num + steps) / den);
    };
    if (opaque_at(lerp(dr), lerp(dc))) return false;
  }
  return true;
}

}  // namespace

EgocentricView egocentric_view(const EnvState& s, int V, bool show_carried) {
  EgocentricView view;
  view.size = V;
  view.cells.assign(static_cast<size_t>(V * V), ViewTag::kUnseen);
  const Pos fwd = dir_vec(s.agent_dir);
  const Pos right = dir_vec(s.agent_dir + 1);
  auto world = [&](int ahead, int lateral) {
    return Pos{s.agent_pos.row + fwd.row * ahead + right.row * lateral,
               s.agent_pos.col + fwd.col * ahead + right.col * lateral};
  };
  for (int vr = 0; vr < V; ++vr) {
    for (int vc = 0; vc < V; ++vc) {
      const int ahead = V - 1 - vr;
      const int lateral = vc - V / 2;
      const Pos p = world(ahead, lateral);
      if (!s.in_bounds(p)) continue;
      const bool visible = line_of_sight(ahead, lateral, [&](int a, int l) {
        const Pos q = world(a, l);
        return !s.in_bounds(q) || opaque(s.at(q));
      });
      if (!visible) continue;
      view.cells[static_cast<size_t>(vr * V + vc)] = tag_of(s.at(p));
    }
  }
  const size_t self = static_cast<size_t>((V - 1) * V + V / 2);
  view.cells[self] = (show_carried && s.carrying) ? tag_of(*s.carrying) : ViewTag::kEmpty;
  return view;
}

Observation observe(const GridSpec& spec, const EnvState& s) {
  Observation obs;
  obs.family = spec.family;
  if (spec.family == Family::kTabular) {
    obs.tabular_index = s.agent_pos.row * s.width + s.agent_pos.col;
  } else {
    obs.view = egocentric_view(s, spec.view_size, true);
    obs.dir = s.agent_dir;
  }
  return obs;
}

std::vector<std::int32_t> Observation::features() const {
  if (family == Family::kTabular) return {tabular_index};
  std::vector<std::int32_t> f;
  f.reserve(view.cells.size() + 1);
  for (size_t i = 0; i < view.cells.size(); ++i) {
    f.push_back(static_cast<std::int32_t>(i) * kViewTagCount +
                static_cast<std::int32_t>(view.cells[i]));
  }
  f.push_back(static_cast<std::int32_t>(view.cells.size()) * kViewTagCount + dir);
  return f;
}

int feature_count(const GridSpec& spec) {
  if (spec.family == Family::kTabular) return spec.width * spec.height;
  return spec.view_size * spec.view_size * kViewTagCount + 4;
}

SubgoalPhase subgoal_phase(const GridSpec& spec, const EnvState& s) {
  const SubgoalPhase goal = make_phase(Entity::kGoal, Verb::kNavigate);
  if (spec.family == Family::kTabular) return goal;
  bool any_door = false;
  for (const auto& t : s.tiles) {
    if (t.type != CellType::kDoor) continue;
    any_door = true;
    if (t.door == DoorState::kOpen) return goal;
  }
  if (!any_door) return goal;
  if (s.carrying && s.carrying->type == CellType::kKey) {
    return make_phase(Entity::kDoor, Verb::kToggle);
  }
  if (s.find(CellType::kKey)) return make_phase(Entity::kKey, Verb::kNavigate);
  return make_phase(Entity::kDoor, Verb::kToggle);
}

std::optional<Pos> phase_target(const GridSpec& spec, const EnvState& s,
                                const SubgoalPhase& phase) {
  if (!phase.entity) return std::nullopt;
  switch (*phase.entity) {
    case Entity::kKey: return s.find(CellType::kKey);
    case Entity::kDoor: return s.find(CellType::kDoor);
    case Entity::kBox: return s.find(CellType::kBox);
    case Entity::kBall:
    case Entity::kGoal: {
      if (auto g = s.find(CellType::kGoal)) return g;
      if (spec.kind == LayoutKind::kRedBall || *phase.entity == Entity::kBall) {
        for (int r = 0; r < s.height; ++r) {
          for (int c = 0; c < s.width; ++c) {
            const Tile& t = s.at({r, c});
            if (t.type == CellType::kBall && t.color == Color::kRed) return Pos{r, c};
          }
        }
      }
      return std::nullopt;
    }
    case Entity::kLava: return s.find(CellType::kHole);
  }
  return std::nullopt;
}

std::optional<int> shortest_path_distance(const EnvState& s, Pos from, Pos target) {
  if (!s.in_bounds(from) || !s.in_bounds(target)) return std::nullopt;
  if (from == target) return 0;
  std::vector<int> dist(static_cast<size_t>(s.width * s.height), -1);
  auto idx = [&](Pos p) { return static_cast<size_t>(p.row * s.width + p.col); };
  std::deque<Pos> q;
  dist[idx(from)] = 0;
  q.push_back(from);
  while (!q.empty()) {
    const Pos p = q.front();
    q.pop_front();
    for (int d = 0; d < 4; ++d) {
      const Pos n = p + dir_vec(d);
      if (!s.in_bounds(n) || dist[idx(n)] >= 0) continue;
      if (n == target) return dist[idx(p)] + 1;
      if (!passable_for_bfs(s, s.at(n))) continue;
      dist[idx(n)] = dist[idx(p)] + 1;
      q.push_back(n);
    }
  }
  return std::nullopt;
}

std::optional<int> shortest_path_distance(const EnvState& s, Pos target) {
  return shortest_path_distance(s, s.agent_pos, target);
}

std::optional<int> approach_distance(const EnvState& s, Pos from, Pos target) {
  auto d = shortest_path_distance(s, from, target);
  if (!d) return d;
  if (blocks_movement(s.at(target))) return std::max(0, *d - 1);
  return d;
}

std::string render(const EnvState& s) {
  std::string out;
  const char arrows[] = {'>', 'v', '<', '^'};
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      const Pos p{r, c};
      if (p == s.agent_pos) {
        out += arrows[s.agent_dir & 3];
        continue;
      }
      const Tile& t = s.at(p);
      switch (t.type) {
        case CellType::kFloor: out += '.'; break;
        case CellType::kHole: out += 'H'; break;
        case CellType::kWall: out += 'W'; break;
        case CellType::kDoor: out += t.door == DoorState::kOpen ? '_' : 'D'; break;
        case CellType::kKey: out += 'K'; break;
        case CellType::kBall: out += t.color == Color::kRed ? 'B' : 'b'; break;
        case CellType::kBox: out += 'X'; break;
        case CellType::kGoal: out += 'G'; break;
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace mira
