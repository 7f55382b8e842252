#include "mira/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mira/shaping.hpp"

namespace mira {

void PpoConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("ppo: lr must be positive");
  if (batch_size <= 0) throw ConfigError("ppo: batch_size must be positive");
  if (minibatch_size <= 0) throw ConfigError("ppo: minibatch_size must be positive");
  if (epochs <= 0) throw ConfigError("ppo: epochs must be positive");
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("ppo: clip must be in (0, 1)");
  if (ent_coef < 0.0 || vf_coef < 0.0) throw ConfigError("ppo: coefficients must be >= 0");
  if (gamma < 0.0 || gamma > 1.0 || lambda < 0.0 || lambda > 1.0) {
    throw ConfigError("ppo: gamma and lambda must be in [0, 1]");
  }
  if (!(penalty_cap >= 0.0)) throw ConfigError("ppo: penalty_cap must be >= 0");
}

namespace {

std::vector<double> penalty_for(std::span<const LogitPenalty> penalties, std::uint64_t layout,
                                const SubgoalPhase& phase, int steps_in_phase, int n_actions,
                                double cap) {
  std::vector<double> out;
  for (const auto& p : penalties) {
    if (p.layout_id != layout || !(p.phase == phase) || steps_in_phase >= p.max_steps) continue;
    if (p.action < 0 || p.action >= n_actions) continue;
    if (out.empty()) out.assign(static_cast<size_t>(n_actions), 0.0);
    auto& v = out[static_cast<size_t>(p.action)];
    v = std::min(cap, v + std::clamp(p.magnitude, 0.0, cap));
  }
  return out;
}

}  // namespace

RolloutBatch collect_rollouts(const Policy& policy, EnvPool& pool, int batch_size, Rng& rng,
                              std::span<const LogitPenalty> penalties, double penalty_cap) {
  if (batch_size <= 0) throw std::invalid_argument("collect_rollouts: batch_size must be positive");
  if (pool.layout_seeds.empty()) throw std::invalid_argument("collect_rollouts: empty layout pool");
  const GridSpec& spec = pool.spec;
  const int n_actions = action_count(spec.family);
  RolloutBatch batch;
  batch.steps.reserve(static_cast<size_t>(batch_size) + static_cast<size_t>(spec.max_steps));
  int episode = 0;
  while (batch.steps.size() < static_cast<size_t>(batch_size)) {
    const std::uint64_t layout_seed = pool.layout_seeds[pool.cursor % pool.layout_seeds.size()];
    ++pool.cursor;
    EpisodeRecord ep;
    ep.begin = batch.steps.size();
    ep.layout_seed = layout_seed;
    try {
      auto [state, obs] = reset(spec, layout_seed);
      ep.layout_id = state.layout_id;
      SubgoalPhase current;
      int steps_in_phase = 0;
      while (!state.done) {
        const SubgoalPhase phase = subgoal_phase(spec, state);
        if (ep.phase_starts.empty() || !(phase == current)) {
          ep.phase_starts.push_back(batch.steps.size());
          ep.phase_states.push_back(state);
          current = phase;
          steps_in_phase = 0;
        }
        if (spec.family == Family::kGridworld) {
          // Query contexts never see the inventory.
          ep.recent_views.push_back(egocentric_view(state, spec.view_size, false));
          if (ep.recent_views.size() > kRecentViews) ep.recent_views.erase(ep.recent_views.begin());
        }
        StepRecord rec;
        rec.features = obs.features();
        rec.penalty = penalty_for(penalties, state.layout_id, phase, steps_in_phase, n_actions,
                                  penalty_cap);
        const ActResult a = act(policy, rec.features, rec.penalty, rng);
        rec.action = a.action;
        rec.log_prob = a.log_prob;
        rec.value = a.value;
        rec.transition.position = state.agent_pos;
        if (spec.family == Family::kGridworld) rec.transition.direction = state.agent_dir;
        rec.transition.action = a.action;
        rec.transition.phase = phase;
        rec.episode = episode;
        ep.anchor = state;
        StepResult r = step(spec, state, a.action, rng);
        rec.reward = r.reward;
        rec.done = state.done;
        ep.ret += r.reward;
        ep.success = ep.success || r.success;
        obs = std::move(r.obs);
        batch.steps.push_back(std::move(rec));
        ++steps_in_phase;
      }
      ep.truncated = !ep.success && state.step_count >= spec.max_steps;
    } catch (const std::exception& e) {
      throw std::runtime_error("episode " + std::to_string(episode) + " (layout seed " +
                               std::to_string(layout_seed) + "): " + e.what());
    }
    ep.end = batch.steps.size();
    batch.episodes.push_back(std::move(ep));
    ++episode;
  }
  return batch;
}

std::vector<double> batch_advantages(const RolloutBatch& batch, double gamma, double lambda) {
  std::vector<double> adv(batch.size(), 0.0);
  std::vector<double> rewards;
  std::vector<double> values;
  for (const auto& ep : batch.episodes) {
    rewards.clear();
    values.clear();
    for (size_t i = ep.begin; i < ep.end; ++i) {
      rewards.push_back(batch.steps[i].reward);
      values.push_back(batch.steps[i].value);
    }
    values.push_back(0.0);
    const auto a = gae(rewards, values, gamma, lambda);
    std::copy(a.begin(), a.end(), adv.begin() + static_cast<std::ptrdiff_t>(ep.begin));
  }
  return adv;
}

void Adam::step(std::vector<double>& theta, const std::vector<double>& grad, double lr) {
  constexpr double kB1 = 0.9;
  constexpr double kB2 = 0.999;
  constexpr double kEps = 1e-8;
  if (m_.size() != theta.size()) {
    m_.assign(theta.size(), 0.0);
    v_.assign(theta.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(kB1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kB2, static_cast<double>(t_));
  for (size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    if (g == 0.0 && m_[i] == 0.0 && v_[i] == 0.0) continue;
    m_[i] = kB1 * m_[i] + (1.0 - kB1) * g;
    v_[i] = kB2 * v_[i] + (1.0 - kB2) * g * g;
    theta[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
  }
}

LossParts ppo_loss(const Policy& policy, const RolloutBatch& batch, std::span<const size_t> idx,
                   std::span<const double> shaped_adv, std::span<const double> returns,
                   const PpoConfig& cfg, std::vector<double>* grad) {
  LossParts out;
  if (idx.empty()) return out;
  const double n = static_cast<double>(idx.size());
  const size_t A = static_cast<size_t>(policy.shape().n_actions);
  std::vector<double> dlogits(A);
  for (size_t i : idx) {
    const StepRecord& s = batch.steps[i];
    const Forward f = policy.forward(s.features);
    const auto p = action_probs(f.logits, s.penalty);
    const size_t a = static_cast<size_t>(s.action);
    const double logp = std::log(p[a]);
    const double ratio = std::exp(logp - s.log_prob);
    const double adv = shaped_adv[i];
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double unclipped_obj = ratio * adv;
    const double clipped_obj = clipped * adv;
    const bool use_unclipped = unclipped_obj <= clipped_obj;
    out.policy -= std::min(unclipped_obj, clipped_obj) / n;
    double entropy = 0.0;
    for (double q : p) {
      if (q > 0.0) entropy -= q * std::log(q);
    }
    out.entropy += entropy / n;
    const double verr = f.value - returns[i];
    out.value += 0.5 * verr * verr / n;
    out.mean_ratio += ratio / n;
    if (std::abs(ratio - 1.0) > cfg.clip) out.clip_fraction += 1.0 / n;
    out.approx_kl += ((ratio - 1.0) - (logp - s.log_prob)) / n;
    if (!grad) continue;
    // d(-surrogate)/d(logp) is -ratio*adv on the unclipped branch, else 0.
    const double dlogp = use_unclipped ? -ratio * adv / n : 0.0;
    for (size_t j = 0; j < A; ++j) {
      const double onehot = j == a ? 1.0 : 0.0;
      double d = dlogp * (onehot - p[j]);
      // d(-ent_coef * H)/d(logit_j) = ent_coef * p_j (log p_j + H)
      if (p[j] > 0.0) d += cfg.ent_coef * p[j] * (std::log(p[j]) + entropy) / n;
      dlogits[j] = d;
    }
    policy.backward(s.features, f, dlogits, cfg.vf_coef * verr / n, *grad);
  }
  out.total = out.policy - cfg.ent_coef * out.entropy + cfg.vf_coef * out.value;
  return out;
}

UpdateDiagnostics shaped_ppo_update(Policy& policy, Adam& opt, const RolloutBatch& batch,
                                    std::span<const double> shaped_adv,
                                    std::span<const double> returns, const PpoConfig& cfg,
                                    Rng& rng) {
  if (shaped_adv.size() != batch.size() || returns.size() != batch.size()) {
    throw std::invalid_argument("shaped_ppo_update: advantages not aligned with batch");
  }
  UpdateDiagnostics d;
  std::vector<size_t> order(batch.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<double> grad(policy.size(), 0.0);
  double sum_ratio = 0, sum_clip = 0, sum_kl = 0, sum_pl = 0, sum_vl = 0, sum_ent = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.minibatch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.minibatch_size));
      std::span<const size_t> mb(order.data() + start, stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      const LossParts l = ppo_loss(policy, batch, mb, shaped_adv, returns, cfg, &grad);
      double norm2 = 0.0;
      for (double g : grad) norm2 += g * g;
      if (!std::isfinite(norm2) || !std::isfinite(l.total)) {
        d.minibatches += 1;
        throw UpdateError("non-finite gradient in epoch " + std::to_string(epoch) +
                              ", minibatch at " + std::to_string(start),
                          d);
      }
      const double norm = std::sqrt(norm2);
      if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) {
        const double s = cfg.max_grad_norm / norm;
        for (double& g : grad) g *= s;
      }
      opt.step(policy.params(), grad, cfg.lr);
      ++d.minibatches;
      sum_ratio += l.mean_ratio;
      sum_clip += l.clip_fraction;
      sum_kl += l.approx_kl;
      sum_pl += l.policy;
      sum_vl += l.value;
      sum_ent += l.entropy;
    }
  }
  if (d.minibatches > 0) {
    const double m = d.minibatches;
    d.mean_ratio = sum_ratio / m;
    d.clip_fraction = sum_clip / m;
    d.approx_kl = sum_kl / m;
    d.policy_loss = sum_pl / m;
    d.value_loss = sum_vl / m;
    d.entropy = sum_ent / m;
  }
  return d;
}

double gradient_check(const Policy& policy, const RolloutBatch& batch,
                      std::span<const double> shaped_adv, std::span<const double> returns,
                      const PpoConfig& cfg, Rng& rng, int n_params) {
  std::vector<size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::vector<double> grad(policy.size(), 0.0);
  ppo_loss(policy, batch, idx, shaped_adv, returns, cfg, &grad);

  std::vector<size_t> coords;
  const size_t n = policy.size();
  const size_t want = std::min(n, static_cast<size_t>(std::max(n_params, 1)));
  std::vector<size_t> by_mag(n);
  std::iota(by_mag.begin(), by_mag.end(), size_t{0});
  std::stable_sort(by_mag.begin(), by_mag.end(),
                   [&](size_t a, size_t b) { return std::abs(grad[a]) > std::abs(grad[b]); });
  for (size_t i = 0; i < want / 2; ++i) coords.push_back(by_mag[i]);
  while (coords.size() < want) {
    const size_t c = rng.below(n);
    if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
  }

  constexpr double kH = 1e-5;
  Policy probe = policy;
  double worst = 0.0;
  for (size_t c : coords) {
    const double orig = probe.params()[c];
    probe.params()[c] = orig + kH;
    const double up = ppo_loss(probe, batch, idx, shaped_adv, returns, cfg, nullptr).total;
    probe.params()[c] = orig - kH;
    const double down = ppo_loss(probe, batch, idx, shaped_adv, returns, cfg, nullptr).total;
    probe.params()[c] = orig;
    const double numeric = (up - down) / (2.0 * kH);
    const double analytic = grad[c];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

namespace {

constexpr char kMagic[8] = {'M', 'I', 'R', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_vec(std::ofstream& os, const std::vector<double>& v) {
  put(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

template <typename T>
T get(std::ifstream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ConfigError("checkpoint truncated: " + path);
  return v;
}

std::vector<double> get_vec(std::ifstream& is, const std::string& path, std::uint64_t expect) {
  const auto n = get<std::uint64_t>(is, path);
  if (n != expect) throw ConfigError("checkpoint size mismatch: " + path);
  std::vector<double> v(n);
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw ConfigError("checkpoint truncated: " + path);
  }
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic, sizeof(kMagic));
  put(os, kCheckpointVersion);
  const PolicyShape& s = ck.policy.shape();
  put(os, static_cast<std::uint8_t>(s.kind));
  put(os, static_cast<std::int32_t>(s.n_features));
  put(os, static_cast<std::int32_t>(s.n_actions));
  put(os, static_cast<std::int32_t>(s.hidden));
  put(os, static_cast<std::int32_t>(s.active_features));
  put_vec(os, ck.policy.params());
  put_vec(os, ck.optimizer.m());
  put_vec(os, ck.optimizer.v());
  put(os, ck.optimizer.t());
  put(os, ck.iteration);
  put(os, static_cast<std::uint64_t>(ck.config_text.size()));
  os.write(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError("not a checkpoint file: " + path);
  }
  if (get<std::uint32_t>(is, path) != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version: " + path);
  }
  PolicyShape s;
  const auto kind = get<std::uint8_t>(is, path);
  if (kind > 1) throw ConfigError("bad policy kind in checkpoint: " + path);
  s.kind = static_cast<PolicyKind>(kind);
  s.n_features = get<std::int32_t>(is, path);
  s.n_actions = get<std::int32_t>(is, path);
  s.hidden = get<std::int32_t>(is, path);
  s.active_features = get<std::int32_t>(is, path);
  Checkpoint ck;
  try {
    ck.policy = Policy(s, 0);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bad policy shape in checkpoint: ") + e.what());
  }
  const auto n = static_cast<std::uint64_t>(ck.policy.size());
  ck.policy.params() = get_vec(is, path, n);
  ck.optimizer = Adam(n);
  ck.optimizer.m() = get_vec(is, path, n);
  ck.optimizer.v() = get_vec(is, path, n);
  ck.optimizer.t() = get<std::int64_t>(is, path);
  ck.iteration = get<std::int64_t>(is, path);
  const auto len = get<std::uint64_t>(is, path);
  if (len > (1u << 24)) throw ConfigError("checkpoint config too large: " + path);
  ck.config_text.resize(len);
  if (!is.read(ck.config_text.data(), static_cast<std::streamsize>(len))) {
    throw ConfigError("checkpoint truncated: " + path);
  }
  return ck;
}

}  // namespace mira
