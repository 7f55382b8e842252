#ifndef MIRA_MEMGRAPH_HPP_
#define MIRA_MEMGRAPH_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mira/gridworld.hpp"
#include "mira/transition.hpp"

namespace mira {

enum class Source : std::uint8_t { kAgent, kOfflineLlm, kOnlineLlm };

std::string_view source_name(Source s);
std::optional<Source> parse_source(std::string_view s);

using NodeId = std::int64_t;

struct TrajectoryNode {
  NodeId id = 0;
  std::vector<AnnotatedTransition> segment;
  std::string zeta;  // final-goal or subgoal id
  double r_hat = 0.0;
  double confidence = 0.0;
  Source source = Source::kAgent;
  std::int64_t access_count = 0;
  std::int64_t last_access_episode = 0;
  std::uint64_t layout_id = 0;

  friend bool operator==(const TrajectoryNode&, const TrajectoryNode&) = default;
};

struct SubgoalNode {
  std::string id;
  std::string description;
  SubgoalPhase tokens;
  std::string parent_goal;

  friend bool operator==(const SubgoalNode&, const SubgoalNode&) = default;
};

struct FinalGoalNode {
  std::string id;
  std::string description;
  SubgoalPhase tokens;

  friend bool operator==(const FinalGoalNode&, const FinalGoalNode&) = default;
};

struct GraphParams {
  std::int64_t prune_window = 100;
  double confidence_bump = 0.1;
  int max_per_key = 4;
};

enum class InsertOutcome : std::uint8_t {
  kDiscarded,  // unscreened online suggestion
  kCreated,    // new node (first for the key, or a novel segment with room)
  kReplaced,   // best node overwritten by a higher-reward segment
  kValidated,  // no structural change; confidence possibly raised
};

struct InsertResult {
  InsertOutcome outcome = InsertOutcome::kDiscarded;
  std::optional<NodeId> node;
};

struct InsertRequest {
  std::uint64_t layout_id = 0;
  std::vector<AnnotatedTransition> segment;
  std::string zeta;
  double r_hat = 0.0;
  double confidence = 0.0;
  Source source = Source::kAgent;
  bool screened = true;
  std::int64_t episode = 0;
};

/// Goals, subgoals, and the trajectory segments stored under them. Single
/// writer; copies are cheap enough to serve as read snapshots.
class MemoryGraph {
 public:
  MemoryGraph() = default;
  explicit MemoryGraph(GraphParams params) : params_(params) {}

  const GraphParams& params() const { return params_; }
  void set_params(const GraphParams& p) { params_ = p; }

  /// Description is parsed into entity-phase tokens; throws ConfigError when
  /// no token can be extracted or the id is taken.
  const FinalGoalNode& add_final_goal(const std::string& id, const std::string& description);
  const SubgoalNode& add_subgoal(const std::string& id, const std::string& description,
                                 const std::string& parent_goal);
  /// Subgoal with these tokens, creating "k<n>" under `parent_goal` if absent.
  std::string ensure_subgoal(const std::string& description, const std::string& parent_goal);

  bool has_zeta(const std::string& zeta) const;
  bool is_final_goal(const std::string& zeta) const;
  /// Tokens of a goal or subgoal id; throws std::out_of_range when unknown.
  const SubgoalPhase& tokens_of(const std::string& zeta) const;

  InsertResult insert_or_update(const InsertRequest& req);
  void record_access(NodeId id, std::int64_t episode);
  std::vector<NodeId> prune(std::int64_t current_episode);

  /// All nodes for the layout whose goal term best aligns (rho > 0) with phase.
  std::vector<const TrajectoryNode*> candidates(std::uint64_t layout_id,
                                                const SubgoalPhase& phase) const;
  /// Candidate with the largest confidence * r_hat.
  const TrajectoryNode* lookup(std::uint64_t layout_id, const SubgoalPhase& phase) const;

  const TrajectoryNode* node(NodeId id) const;
  const std::vector<TrajectoryNode>& trajectory_nodes() const { return nodes_; }
  const std::vector<SubgoalNode>& subgoals() const { return subgoals_; }
  const std::vector<FinalGoalNode>& final_goals() const { return goals_; }
  size_t size() const { return nodes_.size(); }

  /// Structural equality: goals, subgoals, nodes (params excluded).
  friend bool operator==(const MemoryGraph& a, const MemoryGraph& b) {
    return a.goals_ == b.goals_ && a.subgoals_ == b.subgoals_ && a.nodes_ == b.nodes_;
  }

  // Used by load(); bypasses the insertion rules.
  void restore_node(TrajectoryNode n);

 private:
  TrajectoryNode* mutable_node(NodeId id);

  GraphParams params_;
  std::vector<FinalGoalNode> goals_;
  std::vector<SubgoalNode> subgoals_;
  std::vector<TrajectoryNode> nodes_;
  NodeId next_id_ = 1;
};

/// Progress of a segment toward target: 1 - d_end / d_start clipped to
/// [0, 1]. d_end is measured after replaying the last action without slip.
double estimate_subgoal_reward(const GridSpec& spec, const EnvState& env,
                               const std::vector<AnnotatedTransition>& segment, Pos target);

inline constexpr int kGraphSchemaVersion = 1;

std::string graph_to_json(const MemoryGraph& g);
/// Throws ConfigError on malformed input or a schema-version mismatch.
MemoryGraph graph_from_json(const std::string& text, GraphParams params = {});
void save_graph(const MemoryGraph& g, const std::string& path);
MemoryGraph load_graph(const std::string& path, GraphParams params = {});

}  // namespace mira

#endif  // MIRA_MEMGRAPH_HPP_
