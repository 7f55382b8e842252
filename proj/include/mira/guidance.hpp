#ifndef MIRA_GUIDANCE_HPP_
#define MIRA_GUIDANCE_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mira/gridworld.hpp"
#include "mira/memgraph.hpp"
#include "mira/ppo.hpp"

namespace mira {

// ---- suggestions and screening ------------------------------------------

enum class SuggestionKind : std::uint8_t { kPlan, kControl };

struct Suggestion {
  SuggestionKind kind = SuggestionKind::kPlan;
  std::string subgoal;       // plan only
  std::vector<int> actions;  // plan only
  int control_action = 0;    // control only
  std::string raw_text;
  std::optional<std::vector<double>> logprobs;
  std::string provider_id;

  /// Agreement key for consistency voting: "plan:2,2,5" or "control:5".
  std::string canonical() const;
};

/// One raw provider completion; logprobs empty when the provider gave none.
struct Completion {
  std::string text;
  std::vector<double> logprobs;

  friend bool operator==(const Completion&, const Completion&) = default;
};

/// Parses {"type":"plan","subgoal":..,"actions":[..]} or
/// {"type":"control","action":..}; actions by name or index. nullopt when the
/// text is not such an object or names an invalid action.
std::optional<Suggestion> parse_suggestion(const Completion& c, Family family,
                                           const std::string& provider_id = "");
std::string suggestion_to_text(const Suggestion& s, Family family);

enum class ScreenMethod : std::uint8_t { kLikelihood, kConsistency, kDisabled };

struct ScreeningResult {
  bool accepted = false;
  ScreenMethod method = ScreenMethod::kLikelihood;
  double score = 0.0;
};

struct ScreeningConfig {
  bool enabled = true;
  double likelihood_threshold = 0.65;
  double consistency_threshold = 2.0 / 3.0;
};

/// score = exp(mean logprob). Throws std::invalid_argument without logprobs.
ScreeningResult screen_by_likelihood(const Suggestion& s, double threshold = 0.65);

struct ScreenOutcome {
  ScreeningResult result;
  std::optional<Suggestion> suggestion;  // set when accepted (or screening disabled)
};

/// Majority vote over canonicalized completions; unparseable ones never
/// agree with anything. Representative = first member of the largest class,
/// ties broken by the smallest canonical key. Throws when fewer than 2.
ScreenOutcome screen_by_consistency(std::span<const Completion> completions, Family family,
                                    double threshold = 2.0 / 3.0,
                                    const std::string& provider_id = "");

/// Likelihood screening when the first completion carries logprobs, else
/// consistency. Disabled screening accepts the first parseable completion.
ScreenOutcome screen(std::span<const Completion> completions, Family family,
                     const ScreeningConfig& cfg, const std::string& provider_id = "");

// ---- trigger and budget -------------------------------------------------

struct TriggerState {
  int counter = 0;
  int threshold = 10;

  /// Counts zero-utility episodes; fires and resets at the threshold.
  bool check(double episode_utility_sum);
};

class BudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QueryBudget {
  std::int64_t offline_used = 0;
  std::int64_t online_used = 0;
  std::optional<std::int64_t> online_cap;

  bool online_available() const { return !online_cap || online_used < *online_cap; }
  /// Throws BudgetExhausted when capped out.
  void charge_online();
  void charge_offline() { ++offline_used; }
};

// ---- query context and providers ----------------------------------------

/// What a provider may see: an environment description, recent partial
/// observations, and the current phase. No inventory, no cells outside the
/// agent's window.
struct QueryContext {
  Family family = Family::kGridworld;
  std::string env_description;
  std::vector<EgocentricView> views;  // gridworld: oldest first
  std::vector<int> positions;         // tabular: recent state indices
  GridSpec lake_map;                  // tabular: the map named in the description
  SubgoalPhase phase;

  std::string observations_text() const;
  /// Stable text rendering used by prompts and fixture hashes.
  std::string serialize() const;
  std::string hash() const;
};

std::string describe_environment(const GridSpec& spec);
QueryContext build_context(const GridSpec& spec, const EpisodeRecord& episode,
                           const SubgoalPhase& phase);

/// Replaces {env_description}, {observations} and {phase}.
std::string render_prompt(const std::string& tmpl, const QueryContext& ctx);

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string id() const = 0;
  /// k completions for the context. Throws TransportError on retriable faults.
  virtual std::vector<Completion> complete(const QueryContext& ctx, int k, Rng& rng) = 0;
};

/// BFS planner over the visible window, standing in for a language model.
/// With probability corruption_rate each completion becomes a plan of
/// uniformly random actions.
class OracleProvider : public Provider {
 public:
  explicit OracleProvider(double corruption_rate = 0.0) : corruption_rate_(corruption_rate) {}
  std::string id() const override { return "oracle"; }
  std::vector<Completion> complete(const QueryContext& ctx, int k, Rng& rng) override;

  void set_corruption_rate(double r) { corruption_rate_ = r; }
  double corruption_rate() const { return corruption_rate_; }
  /// The uncorrupted answer.
  Suggestion answer(const QueryContext& ctx) const;

 private:
  double corruption_rate_;
};

/// Replays recorded completions keyed by context hash.
class FixtureProvider : public Provider {
 public:
  /// Throws ConfigError on a missing or malformed file.
  explicit FixtureProvider(const std::string& path);
  std::string id() const override { return "fixture"; }
  std::vector<Completion> complete(const QueryContext& ctx, int k, Rng& rng) override;

  static std::string to_json(const std::map<std::string, std::vector<Completion>>& records);

 private:
  std::map<std::string, std::vector<Completion>> records_;
};

struct HttpProviderConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  std::string prompt_template;  // text with placeholders
  double temperature = 0.7;
  int timeout_s = 60;
};

/// Chat-completions client; the API key is read from MIRA_LLM_API_KEY.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig cfg);
  std::string id() const override { return "http:" + cfg_.model; }
  std::vector<Completion> complete(const QueryContext& ctx, int k, Rng& rng) override;

  /// Builds the request body; exposed for tests.
  std::string request_body(const QueryContext& ctx, int k) const;
  /// Extracts completions from a response body; throws TransportError when
  /// the body is not a chat-completions response.
  static std::vector<Completion> parse_response(const std::string& body);

 private:
  HttpProviderConfig cfg_;
};

// ---- planning and grafting ----------------------------------------------

/// Shortest turn/forward action sequence in `state` ending on `target`
/// (interact = false) or facing it with the interaction appended
/// (pickup for keys and balls, toggle for doors). Lake states plan with
/// absolute moves avoiding holes. nullopt when unreachable.
std::optional<std::vector<int>> plan_to(const GridSpec& spec, const EnvState& state, Pos target,
                                        bool interact);

/// The two shortest hole-free lake paths from start to goal (fewer if none).
std::vector<std::vector<int>> lake_safe_paths(const GridSpec& spec, const EnvState& start);

/// Executes actions without slip, recording annotated transitions. nullopt
/// when an action is invalid for the family.
std::optional<std::vector<AnnotatedTransition>> simulate_plan(const GridSpec& spec,
                                                              const EnvState& from,
                                                              std::span<const int> actions,
                                                              EnvState* end_state = nullptr);

enum class ApplyKind : std::uint8_t { kGrafted, kPenalty, kDropped };

struct ApplyOutcome {
  ApplyKind kind = ApplyKind::kDropped;
  InsertResult insert;
  std::string note;
};

struct ApplyParams {
  std::string final_goal = "g0";
  double penalty_magnitude = 1.0;
  int penalty_steps = 50;
  double penalty_cap = 2.0;
  std::int64_t episode = 0;
};

/// Plans are simulated from `anchor` and grafted as online-llm nodes with
/// confidence = screening score; controls register or refresh a penalty for
/// the anchor's (layout, phase). Rejected suggestions change nothing.
ApplyOutcome apply_suggestion(const Suggestion& s, const ScreeningResult& screening,
                              MemoryGraph& graph, std::vector<LogitPenalty>& penalties,
                              const GridSpec& spec, const EnvState& anchor,
                              const ApplyParams& params);

/// Offline priors from the full-knowledge oracle. Lake: the two shortest safe
/// paths under the final goal. Gridworlds: one segment per requested phase
/// entity ("key", "door", "goal") of the solved layout. Returns the number of
/// nodes created or updated.
int add_offline_priors(MemoryGraph& graph, const GridSpec& spec,
                       std::span<const std::uint64_t> layout_seeds,
                       const std::vector<std::string>& phases, double confidence,
                       const std::string& final_goal, QueryBudget& budget);

/// Goal node and the standard subgoal chain for the environment.
void seed_goals(MemoryGraph& graph, const GridSpec& spec, const std::string& final_goal = "g0");

}  // namespace mira

#endif  // MIRA_GUIDANCE_HPP_
