#include "mira/types.hpp"

#include <array>
#include <cmath>

namespace mira {

namespace {

constexpr std::array<std::string_view, kLakeActionCount> kLakeNames = {"left", "down", "right",
                                                                       "up"};
constexpr std::array<std::string_view, kGridActionCount> kGridNames = {
    "turn-left", "turn-right", "forward", "pickup", "drop", "toggle", "done"};

constexpr std::array<std::string_view, 6> kEntityNames = {"key", "door", "goal",
                                                          "ball", "box", "lava"};
constexpr std::array<std::string_view, 3> kVerbNames = {"navigate", "acquire", "toggle"};

}  // namespace

int action_count(Family family) {
  return family == Family::kTabular ? kLakeActionCount : kGridActionCount;
}

std::string_view action_name(Family family, int action) {
  if (action < 0 || action >= action_count(family)) return "invalid";
  return family == Family::kTabular ? kLakeNames[static_cast<size_t>(action)]
                                    : kGridNames[static_cast<size_t>(action)];
}

std::optional<int> parse_action(Family family, std::string_view name) {
  for (int a = 0; a < action_count(family); ++a) {
    if (action_name(family, a) == name) return a;
  }
  // Common spellings from free-form plans.
  if (family == Family::kGridworld) {
    if (name == "left" || name == "turn_left" || name == "turnleft") return 0;
    if (name == "right" || name == "turn_right" || name == "turnright") return 1;
    if (name == "move-forward" || name == "move_forward" || name == "move") return 2;
    if (name == "pick-up" || name == "pick_up" || name == "pick") return 3;
    if (name == "open" || name == "unlock") return 5;
  }
  return std::nullopt;
}

std::string_view entity_name(Entity e) { return kEntityNames[static_cast<size_t>(e)]; }
std::string_view verb_name(Verb v) { return kVerbNames[static_cast<size_t>(v)]; }

std::optional<Entity> parse_entity(std::string_view word) {
  for (size_t i = 0; i < kEntityNames.size(); ++i) {
    if (kEntityNames[i] == word) return static_cast<Entity>(i);
  }
  return std::nullopt;
}

std::optional<Verb> parse_verb(std::string_view word) {
  if (word == "go" || word == "reach" || word == "move" || word == "navigate") {
    return Verb::kNavigate;
  }
  if (word == "pick" || word == "grab" || word == "acquire") return Verb::kAcquire;
  if (word == "open" || word == "toggle" || word == "unlock") return Verb::kToggle;
  return std::nullopt;
}

std::string SubgoalPhase::str() const {
  std::string out = "(";
  out += entity ? std::string(entity_name(*entity)) : "-";
  out += ", ";
  out += verb ? std::string(verb_name(*verb)) : "-";
  out += ")";
  return out;
}

double Rng::normal() {
  // Box-Muller; u1 in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng r(seed ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
  r.next_u64();
  return r.next_u64();
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mira
