#ifndef MIRA_GRIDWORLD_HPP_
#define MIRA_GRIDWORLD_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mira/types.hpp"

namespace mira {

enum class CellType : std::uint8_t {
  kFloor,
  kHole,  // hole on the lake, lava in gridworlds
  kWall,
  kDoor,
  kKey,
  kBall,
  kBox,
  kGoal,
};

enum class Color : std::uint8_t { kRed, kGreen, kBlue, kPurple, kYellow, kGrey };
enum class DoorState : std::uint8_t { kOpen, kClosed, kLocked };

struct Tile {
  CellType type = CellType::kFloor;
  Color color = Color::kGrey;
  DoorState door = DoorState::kClosed;

  friend bool operator==(const Tile&, const Tile&) = default;
};

enum class LayoutKind : std::uint8_t {
  kFixed,  // layout given cell by cell (lake maps, layout files)
  kDoorKey,
  kDistractedDoorKey,
  kRedBall,
  kLavaCrossing,
};

struct GridSpec {
  Family family = Family::kTabular;
  LayoutKind kind = LayoutKind::kFixed;
  int width = 0;
  int height = 0;
  std::vector<Tile> layout;  // row-major; only for kFixed
  std::optional<Pos> start;  // only for kFixed
  double slip_prob = 0.0;
  std::uint64_t seed = 0;
  int max_steps = 100;
  int view_size = 7;

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;
};

/// The standard 8x8 FrozenLake map.
GridSpec lake_8x8(double slip_prob);
/// An obstacle-free tabular grid with start top-left and goal bottom-right.
GridSpec empty_lake(int width, int height);
GridSpec doorkey(int size, bool distractors = false);
GridSpec redball(int size);
GridSpec lava_crossing(int size);

/// Parses a plain-text layout (S,F,H,G,W,K,D,B,X), one row per line.
GridSpec parse_layout(const std::string& text, Family family, int max_steps);
GridSpec load_layout_file(const std::string& path, Family family, int max_steps);

struct EnvState {
  int width = 0;
  int height = 0;
  std::vector<Tile> tiles;
  Pos agent_pos;
  int agent_dir = 0;  // 0 east, 1 south, 2 west, 3 north
  std::optional<Tile> carrying;
  int step_count = 0;
  bool done = false;
  std::uint64_t layout_id = 0;

  const Tile& at(Pos p) const { return tiles[static_cast<size_t>(p.row * width + p.col)]; }
  Tile& at(Pos p) { return tiles[static_cast<size_t>(p.row * width + p.col)]; }
  bool in_bounds(Pos p) const {
    return p.row >= 0 && p.col >= 0 && p.row < height && p.col < width;
  }
  std::optional<Pos> find(CellType type) const;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

// Tags of the symbolic egocentric view.
enum class ViewTag : std::uint8_t {
  kUnseen,
  kEmpty,
  kWall,
  kDoorOpen,
  kDoorClosed,
  kDoorLocked,
  kKey,
  kBall,
  kRedBall,
  kBox,
  kGoal,
  kLava,
};
inline constexpr int kViewTagCount = 12;

/// V x V window; row 0 is farthest ahead, the agent sits at (V-1, V/2)
/// facing toward row 0.
struct EgocentricView {
  int size = 0;
  std::vector<ViewTag> cells;

  ViewTag at(int r, int c) const { return cells[static_cast<size_t>(r * size + c)]; }
  friend bool operator==(const EgocentricView&, const EgocentricView&) = default;
};

struct Observation {
  Family family = Family::kTabular;
  int tabular_index = 0;  // kTabular
  EgocentricView view;    // kGridworld
  int dir = 0;            // kGridworld

  /// Active indices of the one-hot encoding fed to the policy.
  std::vector<std::int32_t> features() const;
};

int feature_count(const GridSpec& spec);

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

std::pair<EnvState, Observation> reset(const GridSpec& spec, std::uint64_t seed);
/// Throws std::logic_error when the episode is already over.
StepResult step(const GridSpec& spec, EnvState& state, int action, Rng& rng);
Observation observe(const GridSpec& spec, const EnvState& state);
EgocentricView egocentric_view(const EnvState& state, int view_size, bool show_carried);

/// Which part of the task the state is in: (key, navigate), (door, toggle)
/// or (goal, navigate).
SubgoalPhase subgoal_phase(const GridSpec& spec, const EnvState& state);
/// Cell the phase is about, if it exists in the state.
std::optional<Pos> phase_target(const GridSpec& spec, const EnvState& state,
                                const SubgoalPhase& phase);

/// BFS moves from the agent to target over passable cells; the target cell
/// itself may be an object or door. nullopt when unreachable.
std::optional<int> shortest_path_distance(const EnvState& state, Pos target);
std::optional<int> shortest_path_distance(const EnvState& state, Pos from, Pos target);

/// Moves needed to reach or interact with target: objects and doors count as
/// reached from an adjacent cell.
std::optional<int> approach_distance(const EnvState& state, Pos from, Pos target);

Pos dir_vec(int dir);
inline Pos operator+(Pos a, Pos b) { return {a.row + b.row, a.col + b.col}; }
std::string render(const EnvState& state);

}  // namespace mira

#endif  // MIRA_GRIDWORLD_HPP_
