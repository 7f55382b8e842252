#ifndef MIRA_TRAINER_HPP_
#define MIRA_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mira/config.hpp"
#include "mira/guidance.hpp"
#include "mira/memgraph.hpp"
#include "mira/ppo.hpp"

namespace mira {

struct MetricsRow {
  std::int64_t iteration = 0;
  std::int64_t env_steps = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
  double mean_abs_adv = 0.0;
  double mean_utility = 0.0;
  double eta = 1.0;
  double xi = 0.0;
  double delta = 0.0;
  std::int64_t graph_size = 0;
  std::int64_t online_queries_used = 0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct EvalResult {
  double mean_return = 0.0;
  double std_return = 0.0;
  double success_rate = 0.0;
  double std_success = 0.0;
};

struct EvalRow {
  std::int64_t iteration = 0;
  EvalResult result;
};

/// Greedy episodes on each layout seed; std is across layouts.
EvalResult evaluate(const Policy& policy, const GridSpec& spec,
                    const std::vector<std::uint64_t>& layout_seeds, int episodes,
                    std::uint64_t seed);

/// mean_return at the first row with success_rate strictly above 0.9.
std::optional<double> sr90_return(const std::vector<MetricsRow>& rows);

/// Mean of mean_return over the last `frac` of the rows (at least one row).
double final_return(const std::vector<MetricsRow>& rows, double frac = 0.1);

std::string metrics_header();
std::string metrics_line(const MetricsRow& r);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
/// Throws ConfigError on a missing file or unexpected header.
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

std::vector<std::uint64_t> train_layout_seeds(const TrainConfig& cfg);
std::vector<std::uint64_t> eval_layout_seeds(const TrainConfig& cfg);

/// Provider selected by the config, or null for "none".
std::unique_ptr<Provider> make_provider(const GuidanceConfig& g);

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::vector<EvalRow> evals;
  Policy policy;
  Adam optimizer;
  MemoryGraph graph;
  QueryBudget budget;
  std::vector<LogitPenalty> penalties;
};

/// Error with the iteration at which training stopped.
class TrainError : public std::runtime_error {
 public:
  TrainError(const std::string& what, std::int64_t iter)
      : std::runtime_error(what), iteration(iter) {}
  std::int64_t iteration;
};

struct TrainOptions {
  std::string run_dir;  // empty = nothing written to disk
  std::optional<std::string> resume;  // checkpoint path
  std::unique_ptr<Provider> provider;  // overrides the configured one
  std::function<void(const std::string&)> log;  // progress lines
};

/// The training loop. Deterministic for a given config (including run.seed).
TrainResult train(const TrainConfig& cfg, TrainOptions opts = {});

}  // namespace mira

#endif  // MIRA_TRAINER_HPP_
