#ifndef MIRA_TRANSITION_HPP_
#define MIRA_TRANSITION_HPP_

#include <optional>

#include "mira/types.hpp"

namespace mira {

/// One step summarized for memory matching: where the agent was, which way it
/// faced (absent on the tabular lake), what it did, and the task phase.
struct AnnotatedTransition {
  Pos position;
  std::optional<int> direction;
  int action = 0;
  SubgoalPhase phase;

  friend bool operator==(const AnnotatedTransition&, const AnnotatedTransition&) = default;
};

}  // namespace mira

#endif  // MIRA_TRANSITION_HPP_
