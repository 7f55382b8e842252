#ifndef MIRA_TYPES_HPP_
#define MIRA_TYPES_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mira {

/// Raised for malformed user input: config files, layouts, fixtures, graphs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Pos {
  int row = 0;
  int col = 0;

  friend bool operator==(const Pos&, const Pos&) = default;
};

/// Tabular lake dynamics (pos only) vs. oriented MiniGrid-style dynamics.
enum class Family : std::uint8_t { kTabular, kGridworld };

// Tabular lake actions, same indices as the Gymnasium FrozenLake.
enum class LakeAction : int { kLeft = 0, kDown = 1, kRight = 2, kUp = 3 };
inline constexpr int kLakeActionCount = 4;

enum class GridAction : int {
  kTurnLeft = 0,
  kTurnRight = 1,
  kForward = 2,
  kPickup = 3,
  kDrop = 4,
  kToggle = 5,
  kDone = 6,
};
inline constexpr int kGridActionCount = 7;

int action_count(Family family);
std::string_view action_name(Family family, int action);
/// Parses an action name ("forward", "turn-left", "down", ...) for the family.
std::optional<int> parse_action(Family family, std::string_view name);

// Entity and verb vocabularies of subgoal descriptions.
enum class Entity : std::uint8_t { kKey, kDoor, kGoal, kBall, kBox, kLava };
enum class Verb : std::uint8_t { kNavigate, kAcquire, kToggle };

std::string_view entity_name(Entity e);
std::string_view verb_name(Verb v);
std::optional<Entity> parse_entity(std::string_view word);
std::optional<Verb> parse_verb(std::string_view word);

/// Entity-phase token pair. At least one of the two tokens is present.
struct SubgoalPhase {
  std::optional<Entity> entity;
  std::optional<Verb> verb;

  bool empty() const { return !entity && !verb; }
  std::string str() const;
  friend bool operator==(const SubgoalPhase&, const SubgoalPhase&) = default;
};

inline SubgoalPhase make_phase(Entity e, Verb v) { return SubgoalPhase{e, v}; }

/// Deterministic 64-bit generator with a portable uniform draw; the standard
/// distributions are implementation-defined, which breaks cross-build replay.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }
  double normal();

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

/// Derives an independent seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace mira

#endif  // MIRA_TYPES_HPP_
