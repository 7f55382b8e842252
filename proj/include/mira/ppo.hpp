#ifndef MIRA_PPO_HPP_
#define MIRA_PPO_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mira/gridworld.hpp"
#include "mira/policy.hpp"
#include "mira/transition.hpp"

namespace mira {

struct PpoConfig {
  double lr = 2.5e-4;
  int batch_size = 512;
  int minibatch_size = 64;
  int epochs = 4;
  double clip = 0.2;
  double ent_coef = 0.01;
  double vf_coef = 0.5;
  double gamma = 0.99;
  double lambda = 0.95;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  double penalty_cap = 2.0;

  void validate() const;
};

/// Bounded pre-softmax penalty on one action while the agent is in `phase`
/// on the given layout; expires on phase change or after `max_steps` steps
/// of that phase within an episode.
struct LogitPenalty {
  std::uint64_t layout_id = 0;
  SubgoalPhase phase;
  int action = 0;
  double magnitude = 1.0;
  int max_steps = 50;

  friend bool operator==(const LogitPenalty&, const LogitPenalty&) = default;
};

struct StepRecord {
  std::vector<std::int32_t> features;
  int action = 0;
  double reward = 0.0;
  double log_prob = 0.0;
  double value = 0.0;
  bool done = false;
  std::vector<double> penalty;  // empty when no penalty was active
  AnnotatedTransition transition;
  int episode = 0;
};

struct EpisodeRecord {
  size_t begin = 0;
  size_t end = 0;  // one past the last step
  double ret = 0.0;
  bool success = false;
  bool truncated = false;  // hit max_steps without terminating
  std::uint64_t layout_id = 0;
  std::uint64_t layout_seed = 0;
  std::vector<size_t> phase_starts;    // absolute step index where each phase run begins
  std::vector<EnvState> phase_states;  // state at each phase run start
  EnvState anchor;                     // state before the final action
  std::vector<EgocentricView> recent_views;  // last few observations, oldest first

  size_t length() const { return end - begin; }
};

struct RolloutBatch {
  std::vector<StepRecord> steps;
  std::vector<EpisodeRecord> episodes;

  size_t size() const { return steps.size(); }
};

/// Training layouts cycled round-robin across episodes.
struct EnvPool {
  GridSpec spec;
  std::vector<std::uint64_t> layout_seeds;
  size_t cursor = 0;
};

inline constexpr int kRecentViews = 4;

/// Complete episodes until at least batch_size steps. Environment faults are
/// rethrown with the episode index and layout seed attached.
RolloutBatch collect_rollouts(const Policy& policy, EnvPool& pool, int batch_size, Rng& rng,
                              std::span<const LogitPenalty> penalties = {},
                              double penalty_cap = 2.0);

/// GAE per episode; truncated episodes bootstrap 0 like terminal ones.
std::vector<double> batch_advantages(const RolloutBatch& batch, double gamma, double lambda);

struct UpdateDiagnostics {
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  int minibatches = 0;
};

class UpdateError : public std::runtime_error {
 public:
  UpdateError(const std::string& what, UpdateDiagnostics d)
      : std::runtime_error(what), diagnostics(d) {}
  UpdateDiagnostics diagnostics;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& grad, double lr);

  std::vector<double>& m() { return m_; }
  std::vector<double>& v() { return v_; }
  std::int64_t& t() { return t_; }
  const std::vector<double>& m() const { return m_; }
  const std::vector<double>& v() const { return v_; }
  std::int64_t t() const { return t_; }

  friend bool operator==(const Adam&, const Adam&) = default;

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t t_ = 0;
};

struct LossParts {
  double total = 0.0;
  double policy = 0.0;  // -mean clipped surrogate
  double value = 0.0;   // 0.5 * mean squared error
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

/// Clipped surrogate loss over the listed samples, with entropy bonus and
/// value loss; adds its gradient into grad when non-null.
LossParts ppo_loss(const Policy& policy, const RolloutBatch& batch, std::span<const size_t> idx,
                   std::span<const double> shaped_adv, std::span<const double> returns,
                   const PpoConfig& cfg, std::vector<double>* grad);

/// Epochs of shuffled minibatch Adam steps on ppo_loss. Throws UpdateError
/// (leaving params untouched for that minibatch) on non-finite gradients.
UpdateDiagnostics shaped_ppo_update(Policy& policy, Adam& opt, const RolloutBatch& batch,
                                    std::span<const double> shaped_adv,
                                    std::span<const double> returns, const PpoConfig& cfg,
                                    Rng& rng);

/// Max relative error between the analytic gradient of ppo_loss over the
/// whole batch and central differences (h = 1e-5) on at least n_params
/// coordinates, half drawn at random and half among the largest gradients.
double gradient_check(const Policy& policy, const RolloutBatch& batch,
                      std::span<const double> shaped_adv, std::span<const double> returns,
                      const PpoConfig& cfg, Rng& rng, int n_params = 20);

struct Checkpoint {
  Policy policy;
  Adam optimizer;
  std::int64_t iteration = 0;
  std::string config_text;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
/// Throws ConfigError when the file is missing, truncated or of another version.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mira

#endif  // MIRA_PPO_HPP_
