#ifndef MIRA_UTILITY_HPP_
#define MIRA_UTILITY_HPP_

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mira/memgraph.hpp"
#include "mira/transition.hpp"

namespace mira {

// Similarity levels between an agent step and a stored step.
inline constexpr double kHighSim = 1.0;
inline constexpr double kModSim = 0.7;
inline constexpr double kLowSim = 0.4;

/// 1.0 when position, direction and action match; 0.7 when only direction
/// differs; 0.4 when the agent is one turn away from the stored heading;
/// else 0. Without directions only position + action count.
/// Throws std::invalid_argument when one side has a direction and the other not.
double similarity(const AnnotatedTransition& agent, const AnnotatedTransition& memory);

/// Jaccard index of the two entity-phase token sets.
double goal_alignment(const SubgoalPhase& a, const SubgoalPhase& b);

/// Rule-based extraction of (entity, phase) from a subgoal description.
/// Throws ConfigError when neither token is recognised.
SubgoalPhase tokenize_subgoal(std::string_view description);

enum class AlignmentMode : std::uint8_t {
  kPhaseVsNode,       // rho(agent phase of each step, node goal term)
  kTargetGoalVsNode,  // rho(final target goal, node goal term)
};

struct UtilityVector {
  std::vector<double> values;
  std::optional<NodeId> matched_node;

  double sum() const;
  bool any_positive() const;
};

/// Per-step breakdown, kept for debugging dumps.
struct UtilityTrace {
  std::vector<double> sim;
  std::vector<double> rho;
};

/// U_t = c * r_hat * rho * s for the rollout's trailing steps aligned
/// one-to-one with the node's segment; other steps are 0. `target_goal` is
/// only read in kTargetGoalVsNode mode.
UtilityVector compute_utility(std::span<const AnnotatedTransition> rollout,
                              const TrajectoryNode& node, const SubgoalPhase& node_tokens,
                              const SubgoalPhase& target_goal = {},
                              AlignmentMode mode = AlignmentMode::kPhaseVsNode,
                              UtilityTrace* trace = nullptr);

/// Best utility over the graph's candidates for (layout, phase): the node
/// maximising the summed utility. All-zero with no match when none qualify.
UtilityVector match_rollout(const MemoryGraph& graph, std::uint64_t layout_id,
                            const SubgoalPhase& phase,
                            std::span<const AnnotatedTransition> rollout,
                            const SubgoalPhase& target_goal = {},
                            AlignmentMode mode = AlignmentMode::kPhaseVsNode);

}  // namespace mira

#endif  // MIRA_UTILITY_HPP_
