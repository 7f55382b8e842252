#include "mira/utility.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mira {

double similarity(const AnnotatedTransition& a, const AnnotatedTransition& m) {
  if (a.direction.has_value() != m.direction.has_value()) {
    throw std::invalid_argument("similarity: transitions from different environment families");
  }
  const bool pos_action = a.position == m.position && a.action == m.action;
  if (!a.direction) return pos_action ? kHighSim : 0.0;
  const int da = *a.direction;
  const int dm = *m.direction;
  if (pos_action && da == dm) return kHighSim;
  if (pos_action) return kModSim;
  if ((da + 1) % 4 == dm || (da + 3) % 4 == dm) return kLowSim;
  return 0.0;
}

namespace {

std::vector<std::string_view> token_set(const SubgoalPhase& p) {
  std::vector<std::string_view> t;
  if (p.entity) t.push_back(entity_name(*p.entity));
  if (p.verb) t.push_back(verb_name(*p.verb));
  return t;
}

}  // namespace

double goal_alignment(const SubgoalPhase& a, const SubgoalPhase& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("goal_alignment: empty token set");
  const auto ta = token_set(a);
  const auto tb = token_set(b);
  // Entity and verb vocabularies are disjoint, so the sets have no duplicates.
  int inter = 0;
  for (auto x : ta) inter += static_cast<int>(std::count(tb.begin(), tb.end(), x));
  const int uni = static_cast<int>(ta.size() + tb.size()) - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

SubgoalPhase tokenize_subgoal(std::string_view description) {
  if (description.empty()) throw ConfigError("subgoal description is empty");
  SubgoalPhase out;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    if (!out.entity) out.entity = parse_entity(word);
    if (!out.verb) out.verb = parse_verb(word);
    word.clear();
  };
  for (char ch : description) {
    if (std::isalpha(static_cast<unsigned char>(ch))) {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else {
      flush();
    }
  }
  flush();
  if (out.empty()) {
    throw ConfigError("subgoal description has no known entity or verb: '" +
                      std::string(description) + "'");
  }
  return out;
}

double UtilityVector::sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

bool UtilityVector::any_positive() const {
  return std::any_of(values.begin(), values.end(), [](double v) { return v > 0.0; });
}

UtilityVector compute_utility(std::span<const AnnotatedTransition> rollout,
                              const TrajectoryNode& node, const SubgoalPhase& node_tokens,
                              const SubgoalPhase& target_goal, AlignmentMode mode,
                              UtilityTrace* trace) {
  if (node.segment.empty()) throw std::invalid_argument("compute_utility: empty node segment");
  UtilityVector u;
  u.values.assign(rollout.size(), 0.0);
  if (trace) {
    trace->sim.assign(rollout.size(), 0.0);
    trace->rho.assign(rollout.size(), 0.0);
  }
  const size_t n = std::min(rollout.size(), node.segment.size());
  const size_t r0 = rollout.size() - n;
  const size_t m0 = node.segment.size() - n;
  const double scale = node.confidence * node.r_hat;
  double target_rho = 0.0;
  if (mode == AlignmentMode::kTargetGoalVsNode) target_rho = goal_alignment(target_goal, node_tokens);
  for (size_t i = 0; i < n; ++i) {
    const auto& a = rollout[r0 + i];
    const auto& m = node.segment[m0 + i];
    const double s = similarity(a, m);
    const double rho =
        mode == AlignmentMode::kPhaseVsNode ? goal_alignment(a.phase, node_tokens) : target_rho;
    u.values[r0 + i] = scale * rho * s;
    if (trace) {
      trace->sim[r0 + i] = s;
      trace->rho[r0 + i] = rho;
    }
  }
  if (u.any_positive()) u.matched_node = node.id;
  return u;
}

UtilityVector match_rollout(const MemoryGraph& graph, std::uint64_t layout_id,
                            const SubgoalPhase& phase,
                            std::span<const AnnotatedTransition> rollout,
                            const SubgoalPhase& target_goal, AlignmentMode mode) {
  UtilityVector best;
  best.values.assign(rollout.size(), 0.0);
  if (rollout.empty()) return best;
  double best_sum = 0.0;
  for (const TrajectoryNode* node : graph.candidates(layout_id, phase)) {
    UtilityVector u =
        compute_utility(rollout, *node, graph.tokens_of(node->zeta), target_goal, mode);
    const double s = u.sum();
    if (s > best_sum) {
      best_sum = s;
      best = std::move(u);
    }
  }
  return best;
}

}  // namespace mira
