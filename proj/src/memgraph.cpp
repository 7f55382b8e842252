#include "mira/memgraph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mira/utility.hpp"

namespace mira {

using json = nlohmann::json;

std::string_view source_name(Source s) {
  switch (s) {
    case Source::kAgent: return "agent";
    case Source::kOfflineLlm: return "offline-llm";
    case Source::kOnlineLlm: return "online-llm";
  }
  return "unknown";
}

std::optional<Source> parse_source(std::string_view s) {
  if (s == "agent") return Source::kAgent;
  if (s == "offline-llm") return Source::kOfflineLlm;
  if (s == "online-llm") return Source::kOnlineLlm;
  return std::nullopt;
}

const FinalGoalNode& MemoryGraph::add_final_goal(const std::string& id,
                                                 const std::string& description) {
  if (has_zeta(id)) throw ConfigError("goal id already in graph: " + id);
  goals_.push_back(FinalGoalNode{id, description, tokenize_subgoal(description)});
  return goals_.back();
}

const SubgoalNode& MemoryGraph::add_subgoal(const std::string& id, const std::string& description,
                                            const std::string& parent_goal) {
  if (has_zeta(id)) throw ConfigError("subgoal id already in graph: " + id);
  if (!is_final_goal(parent_goal)) throw ConfigError("unknown parent goal: " + parent_goal);
  subgoals_.push_back(SubgoalNode{id, description, tokenize_subgoal(description), parent_goal});
  return subgoals_.back();
}

std::string MemoryGraph::ensure_subgoal(const std::string& description,
                                        const std::string& parent_goal) {
  const SubgoalPhase tokens = tokenize_subgoal(description);
  for (const auto& g : goals_) {
    if (g.tokens == tokens) return g.id;
  }
  for (const auto& s : subgoals_) {
    if (s.tokens == tokens) return s.id;
  }
  std::string id;
  for (size_t n = subgoals_.size() + 1;; ++n) {
    id = "k" + std::to_string(n);
    if (!has_zeta(id)) break;
  }
  add_subgoal(id, description, parent_goal);
  return id;
}

bool MemoryGraph::has_zeta(const std::string& zeta) const {
  return is_final_goal(zeta) ||
         std::any_of(subgoals_.begin(), subgoals_.end(),
                     [&](const SubgoalNode& s) { return s.id == zeta; });
}

bool MemoryGraph::is_final_goal(const std::string& zeta) const {
  return std::any_of(goals_.begin(), goals_.end(),
                     [&](const FinalGoalNode& g) { return g.id == zeta; });
}

const SubgoalPhase& MemoryGraph::tokens_of(const std::string& zeta) const {
  for (const auto& g : goals_) {
    if (g.id == zeta) return g.tokens;
  }
  for (const auto& s : subgoals_) {
    if (s.id == zeta) return s.tokens;
  }
  throw std::out_of_range("unknown goal term: " + zeta);
}

TrajectoryNode* MemoryGraph::mutable_node(NodeId id) {
  for (auto& n : nodes_) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const TrajectoryNode* MemoryGraph::node(NodeId id) const {
  for (const auto& n : nodes_) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

InsertResult MemoryGraph::insert_or_update(const InsertRequest& req) {
  if (req.source == Source::kOnlineLlm && !req.screened) return {InsertOutcome::kDiscarded, {}};
  if (!has_zeta(req.zeta)) throw std::invalid_argument("insert_or_update: unknown zeta " + req.zeta);
  if (!(req.r_hat >= 0.0 && req.r_hat <= 1.0)) {
    throw std::invalid_argument("insert_or_update: r_hat outside [0,1]");
  }
  if (!(req.confidence >= 0.0 && req.confidence <= 1.0)) {
    throw std::invalid_argument("insert_or_update: confidence outside [0,1]");
  }
  if (req.segment.empty()) throw std::invalid_argument("insert_or_update: empty segment");

  TrajectoryNode* best = nullptr;
  TrajectoryNode* same = nullptr;
  int count = 0;
  for (auto& n : nodes_) {
    if (n.layout_id != req.layout_id || n.zeta != req.zeta) continue;
    ++count;
    if (!best || n.r_hat > best->r_hat) best = &n;
    if (!same && n.segment == req.segment) same = &n;
  }

  auto bump = [&](TrajectoryNode& n) {
    if (req.source == Source::kAgent) {
      n.confidence = std::min(1.0, n.confidence + params_.confidence_bump);
    }
  };

  if (count > 0 && req.r_hat > best->r_hat) {
    // An identical stored segment is upgraded in place rather than duplicated.
    TrajectoryNode& target = same ? *same : *best;
    target.segment = req.segment;
    target.r_hat = req.r_hat;
    target.confidence = req.confidence;
    target.source = req.source;
    target.last_access_episode = std::max(target.last_access_episode, req.episode);
    bump(target);
    return {InsertOutcome::kReplaced, target.id};
  }
  if (count == 0 || (!same && count < params_.max_per_key)) {
    TrajectoryNode n;
    n.id = next_id_++;
    n.segment = req.segment;
    n.zeta = req.zeta;
    n.r_hat = req.r_hat;
    n.confidence = req.confidence;
    n.source = req.source;
    n.access_count = 0;
    n.last_access_episode = req.episode;
    n.layout_id = req.layout_id;
    nodes_.push_back(std::move(n));
    return {InsertOutcome::kCreated, nodes_.back().id};
  }
  TrajectoryNode& target = same ? *same : *best;
  bump(target);
  return {InsertOutcome::kValidated, target.id};
}

void MemoryGraph::record_access(NodeId id, std::int64_t episode) {
  TrajectoryNode* n = mutable_node(id);
  if (!n) throw std::out_of_range("record_access: unknown node " + std::to_string(id));
  ++n->access_count;
  n->last_access_episode = std::max(n->last_access_episode, episode);
}

std::vector<NodeId> MemoryGraph::prune(std::int64_t current_episode) {
  std::vector<NodeId> removed;
  std::erase_if(nodes_, [&](const TrajectoryNode& n) {
    if (is_final_goal(n.zeta)) return false;
    if (current_episode - n.last_access_episode < params_.prune_window) return false;
    removed.push_back(n.id);
    return true;
  });
  return removed;
}

std::vector<const TrajectoryNode*> MemoryGraph::candidates(std::uint64_t layout_id,
                                                           const SubgoalPhase& phase) const {
  std::vector<const TrajectoryNode*> out;
  if (phase.empty()) return out;
  double best_rho = 0.0;
  for (const auto& n : nodes_) {
    if (n.layout_id != layout_id) continue;
    const double rho = goal_alignment(phase, tokens_of(n.zeta));
    if (rho <= 0.0 || rho < best_rho) continue;
    if (rho > best_rho) {
      best_rho = rho;
      out.clear();
    }
    out.push_back(&n);
  }
  return out;
}

const TrajectoryNode* MemoryGraph::lookup(std::uint64_t layout_id,
                                          const SubgoalPhase& phase) const {
  const TrajectoryNode* best = nullptr;
  for (const TrajectoryNode* n : candidates(layout_id, phase)) {
    if (!best || n->confidence * n->r_hat > best->confidence * best->r_hat) best = n;
  }
  return best;
}

void MemoryGraph::restore_node(TrajectoryNode n) {
  next_id_ = std::max(next_id_, n.id + 1);
  nodes_.push_back(std::move(n));
}

double estimate_subgoal_reward(const GridSpec& spec, const EnvState& env,
                               const std::vector<AnnotatedTransition>& segment, Pos target) {
  if (segment.empty()) throw std::invalid_argument("estimate_subgoal_reward: empty segment");
  if (!env.in_bounds(target)) throw std::invalid_argument("estimate_subgoal_reward: target out of bounds");
  // Replay the final action without slip to find where the segment ends.
  GridSpec det = spec;
  det.slip_prob = 0.0;
  det.max_steps = std::max(det.max_steps, 1) + 1;
  EnvState sim = env;
  sim.done = false;
  sim.step_count = 0;
  sim.agent_pos = segment.back().position;
  sim.agent_dir = segment.back().direction.value_or(0);
  Rng unused(0);
  step(det, sim, segment.back().action, unused);
  const Pos start = segment.front().position;
  const Pos end = sim.agent_pos;

  const auto d_end = approach_distance(env, end, target);
  if (d_end && *d_end == 0) return 1.0;
  const auto d_start = approach_distance(env, start, target);
  if (!d_end || !d_start || *d_start == 0) return 0.0;
  return std::clamp(1.0 - static_cast<double>(*d_end) / static_cast<double>(*d_start), 0.0, 1.0);
}

namespace {

json tokens_json(const SubgoalPhase& p) {
  return json::array({p.entity ? json(std::string(entity_name(*p.entity))) : json(nullptr),
                      p.verb ? json(std::string(verb_name(*p.verb))) : json(nullptr)});
}

SubgoalPhase tokens_from(const json& j) {
  SubgoalPhase p;
  if (!j.is_array() || j.size() != 2) throw ConfigError("graph: tokens must be [entity, verb]");
  if (!j[0].is_null()) {
    p.entity = parse_entity(j[0].get<std::string>());
    if (!p.entity) throw ConfigError("graph: unknown entity token");
  }
  if (!j[1].is_null()) {
    p.verb = parse_verb(j[1].get<std::string>());
    if (!p.verb) throw ConfigError("graph: unknown verb token");
  }
  return p;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

std::string graph_to_json(const MemoryGraph& g) {
  json root;
  root["version"] = kGraphSchemaVersion;
  root["final_goals"] = json::array();
  for (const auto& goal : g.final_goals()) {
    root["final_goals"].push_back(
        {{"id", goal.id}, {"description", goal.description}, {"tokens", tokens_json(goal.tokens)}});
  }
  root["subgoals"] = json::array();
  for (const auto& s : g.subgoals()) {
    root["subgoals"].push_back({{"id", s.id},
                                {"description", s.description},
                                {"tokens", tokens_json(s.tokens)},
                                {"parent_goal", s.parent_goal}});
  }
  root["trajectory_nodes"] = json::array();
  for (const auto& n : g.trajectory_nodes()) {
    json seg = json::array();
    for (const auto& t : n.segment) {
      seg.push_back({{"pos", {t.position.row, t.position.col}},
                     {"dir", t.direction ? json(*t.direction) : json(nullptr)},
                     {"action", t.action},
                     {"phase", tokens_json(t.phase)}});
    }
    root["trajectory_nodes"].push_back({{"id", n.id},
                                        {"layout_id", hex64(n.layout_id)},
                                        {"zeta", n.zeta},
                                        {"r_hat", n.r_hat},
                                        {"confidence", n.confidence},
                                        {"source", std::string(source_name(n.source))},
                                        {"access_count", n.access_count},
                                        {"last_access_episode", n.last_access_episode},
                                        {"segment", std::move(seg)}});
  }
  return root.dump(1);
}

MemoryGraph graph_from_json(const std::string& text, GraphParams params) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("graph: malformed JSON: ") + e.what());
  }
  MemoryGraph g(params);
  try {
    if (!root.is_object() || !root.contains("version")) throw ConfigError("graph: missing version");
    if (root.at("version").get<int>() != kGraphSchemaVersion) {
      throw ConfigError("graph: schema version " + root.at("version").dump() + " != " +
                        std::to_string(kGraphSchemaVersion));
    }
    for (const auto& j : root.at("final_goals")) {
      g.add_final_goal(j.at("id").get<std::string>(), j.at("description").get<std::string>());
    }
    for (const auto& j : root.at("subgoals")) {
      g.add_subgoal(j.at("id").get<std::string>(), j.at("description").get<std::string>(),
                    j.at("parent_goal").get<std::string>());
    }
    for (const auto& j : root.at("trajectory_nodes")) {
      TrajectoryNode n;
      n.id = j.at("id").get<NodeId>();
      n.layout_id = std::stoull(j.at("layout_id").get<std::string>(), nullptr, 16);
      n.zeta = j.at("zeta").get<std::string>();
      if (!g.has_zeta(n.zeta)) throw ConfigError("graph: node references unknown goal " + n.zeta);
      n.r_hat = j.at("r_hat").get<double>();
      n.confidence = j.at("confidence").get<double>();
      if (n.r_hat < 0 || n.r_hat > 1 || n.confidence < 0 || n.confidence > 1) {
        throw ConfigError("graph: r_hat/confidence outside [0,1]");
      }
      auto src = parse_source(j.at("source").get<std::string>());
      if (!src) throw ConfigError("graph: unknown source");
      n.source = *src;
      n.access_count = j.value("access_count", std::int64_t{0});
      n.last_access_episode = j.value("last_access_episode", std::int64_t{0});
      for (const auto& t : j.at("segment")) {
        AnnotatedTransition tr;
        tr.position = Pos{t.at("pos").at(0).get<int>(), t.at("pos").at(1).get<int>()};
        if (!t.at("dir").is_null()) tr.direction = t.at("dir").get<int>();
        tr.action = t.at("action").get<int>();
        tr.phase = tokens_from(t.at("phase"));
        n.segment.push_back(tr);
      }
      if (n.segment.empty()) throw ConfigError("graph: node with empty segment");
      g.restore_node(std::move(n));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }
  return g;
}

void save_graph(const MemoryGraph& g, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write graph file: " + path);
  f << graph_to_json(g) << "\n";
}

MemoryGraph load_graph(const std::string& path, GraphParams params) {
  std::ifstream f(path);
  if (!f) throw ConfigError("graph file not found: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return graph_from_json(ss.str(), params);
}

}  // namespace mira
