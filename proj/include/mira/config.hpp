#ifndef MIRA_CONFIG_HPP_
#define MIRA_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mira/gridworld.hpp"
#include "mira/memgraph.hpp"
#include "mira/ppo.hpp"
#include "mira/shaping.hpp"
#include "mira/utility.hpp"

namespace mira {

struct EnvConfig {
  std::string name = "lake";  // lake | doorkey | distracted-doorkey | redball | lavacrossing | file
  int size = 8;
  double slip_prob = 2.0 / 3.0;
  int max_steps = 0;  // 0 = family default
  int view_size = 7;
  std::string layout_file;
  int train_layouts = 1;
  int eval_layouts = 8;
};

struct ShapingConfig {
  bool enabled = true;  // false runs the plain PPO path (no utility at all)
  double eta0 = 0.8;
  std::vector<double> xi0 = {0.0};
  double delta = 0.5;
  std::string decay = "exponential";  // exponential | linear
  std::int64_t horizon = 0;           // 0 = run.iterations
  double eta_ramp_frac = 0.25;
  double xi_hold_frac = 0.1;
  double half_life_frac = 0.1;
  double rate = 0.0;  // > 0 overrides half_life_frac
  double adv_floor = 0.05;
  std::string alignment = "phase";  // phase | target
};

struct MemgraphConfig {
  std::int64_t prune_window = 100;
  double confidence_bump = 0.1;
  int max_per_key = 4;
  double insert_percentile = 0.9;
  int insert_window = 100;
  double agent_confidence = 0.5;
  int max_segment_len = 16;
};

struct GuidanceConfig {
  std::string provider = "none";  // none | oracle | fixture | http
  bool offline_priors = false;
  std::vector<std::string> offline_phases = {"goal"};
  double offline_confidence = 0.8;
  int offline_layouts = 0;  // first n training layouts get priors; 0 = all
  std::string priors_file;
  int trigger_n = 10;
  std::int64_t online_cap = -1;  // < 0 = unlimited
  int k = 3;
  bool screening = true;
  double likelihood_threshold = 0.65;
  double consistency_threshold = 2.0 / 3.0;
  double corruption_rate = 0.0;
  double corruption_after_frac = 0.0;
  bool screening_after_corruption = true;
  double penalty_magnitude = 1.0;
  int penalty_steps = 50;
  std::string fixture_file;
  std::string http_base_url = "https://api.openai.com";
  std::string http_model = "gpt-4o-mini";
  std::string prompt_file;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::int64_t iterations = 100;
  int eval_interval = 10;
  int eval_episodes = 10;
  int checkpoint_interval = 0;  // 0 = final checkpoint only
  std::string policy = "tabular";  // tabular | network
  int hidden = 64;
};

struct TrainConfig {
  EnvConfig env;
  PpoConfig ppo;
  ShapingConfig shaping;
  MemgraphConfig memgraph;
  GuidanceConfig guidance;
  RunConfig run;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  GridSpec grid_spec() const;
  ShapingSchedule schedule() const;
  GraphParams graph_params() const;
  AlignmentMode alignment() const;
};

struct ConfigKey {
  std::string name;
  std::string type;
  std::string help;
};

/// Every key accepted in config files and --set overrides.
std::vector<ConfigKey> config_keys();

/// Parses "[section]" headers and "key = value" lines; values are numbers,
/// true/false, "strings" or [arrays]. Unknown keys are errors.
TrainConfig parse_config(const std::string& text, const TrainConfig& base = {});
TrainConfig load_config(const std::string& path);
/// Applies one "section.key=value" override.
void apply_override(TrainConfig& cfg, const std::string& assignment);
/// Canonical text that parse_config reads back to an equal config.
std::string config_to_text(const TrainConfig& cfg);

}  // namespace mira

#endif  // MIRA_CONFIG_HPP_
