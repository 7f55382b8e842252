#include "mira/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "mira/plot.hpp"
#include "mira/shaping.hpp"
#include "mira/utility.hpp"

namespace mira {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFinalGoal = "g0";

// Stream ids for derive_seed.
enum : std::uint64_t {
  kStreamPolicy = 1,
  kStreamRollout = 2,
  kStreamUpdate = 3,
  kStreamGuidance = 4,
  kStreamEval = 5,
  kStreamTrainLayouts = 0x1000,
  kStreamEvalLayouts = 0x2000,
};

std::string phase_description(const SubgoalPhase& p) {
  std::string out;
  if (p.verb) out += verb_name(*p.verb);
  if (p.entity) out += (out.empty() ? "" : " ") + std::string(entity_name(*p.entity));
  return out;
}

std::string zeta_for(MemoryGraph& graph, const SubgoalPhase& phase) {
  for (const auto& g : graph.final_goals()) {
    if (g.tokens == phase) return g.id;
  }
  return graph.ensure_subgoal(phase_description(phase), kFinalGoal);
}

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double rank = std::ceil(p * static_cast<double>(v.size()));
  const size_t idx = static_cast<size_t>(std::clamp(rank - 1.0, 0.0, static_cast<double>(v.size() - 1)));
  return v[idx];
}

PolicyShape policy_shape(const TrainConfig& cfg, const GridSpec& spec) {
  PolicyShape s;
  s.kind = cfg.run.policy == "network" ? PolicyKind::kNetwork : PolicyKind::kTabular;
  s.n_features = feature_count(spec);
  s.n_actions = action_count(spec.family);
  s.hidden = cfg.run.hidden;
  s.active_features = spec.family == Family::kTabular ? 1 : spec.view_size * spec.view_size + 1;
  return s;
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<std::uint64_t> train_layout_seeds(const TrainConfig& cfg) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < cfg.env.train_layouts; ++i) {
    out.push_back(derive_seed(cfg.run.seed, kStreamTrainLayouts + static_cast<std::uint64_t>(i)));
  }
  return out;
}

std::vector<std::uint64_t> eval_layout_seeds(const TrainConfig& cfg) {
  const auto train = train_layout_seeds(cfg);
  std::vector<std::uint64_t> out;
  for (std::uint64_t i = 0; out.size() < static_cast<size_t>(cfg.env.eval_layouts); ++i) {
    const auto s = derive_seed(cfg.run.seed, kStreamEvalLayouts + i);
    if (std::find(train.begin(), train.end(), s) == train.end()) out.push_back(s);
  }
  return out;
}

EvalResult evaluate(const Policy& policy, const GridSpec& spec,
                    const std::vector<std::uint64_t>& layout_seeds, int episodes,
                    std::uint64_t seed) {
  EvalResult out;
  if (layout_seeds.empty() || episodes <= 0) return out;
  std::vector<double> rets;
  std::vector<double> succ;
  for (size_t li = 0; li < layout_seeds.size(); ++li) {
    Rng rng(derive_seed(seed, li));
    double r_sum = 0.0;
    double s_sum = 0.0;
    for (int e = 0; e < episodes; ++e) {
      auto [state, obs] = reset(spec, layout_seeds[li]);
      bool success = false;
      while (!state.done) {
        const int a = greedy_action(policy, obs.features());
        StepResult r = step(spec, state, a, rng);
        r_sum += r.reward;
        success = success || r.success;
        obs = std::move(r.obs);
      }
      s_sum += success ? 1.0 : 0.0;
    }
    rets.push_back(r_sum / episodes);
    succ.push_back(s_sum / episodes);
  }
  auto mean_std = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return std::make_pair(m, std::sqrt(var / static_cast<double>(v.size())));
  };
  std::tie(out.mean_return, out.std_return) = mean_std(rets);
  std::tie(out.success_rate, out.std_success) = mean_std(succ);
  return out;
}

std::optional<double> sr90_return(const std::vector<MetricsRow>& rows) {
  for (const auto& r : rows) {
    if (r.success_rate > 0.9) return r.mean_return;
  }
  return std::nullopt;
}

double final_return(const std::vector<MetricsRow>& rows, double frac) {
  if (rows.empty()) return 0.0;
  const size_t n = std::max<size_t>(1, static_cast<size_t>(std::llround(frac * static_cast<double>(rows.size()))));
  double sum = 0.0;
  for (size_t i = rows.size() - n; i < rows.size(); ++i) sum += rows[i].mean_return;
  return sum / static_cast<double>(n);
}

std::string metrics_header() {
  return "iteration,env_steps,mean_return,success_rate,mean_abs_adv,mean_utility,eta,xi,delta,"
         "graph_size,online_queries_used,clip_fraction,approx_kl";
}

std::string metrics_line(const MetricsRow& r) {
  std::ostringstream os;
  os << r.iteration << ',' << r.env_steps << ',' << fmt(r.mean_return) << ',' << fmt(r.success_rate)
     << ',' << fmt(r.mean_abs_adv) << ',' << fmt(r.mean_utility) << ',' << fmt(r.eta) << ','
     << fmt(r.xi) << ',' << fmt(r.delta) << ',' << r.graph_size << ',' << r.online_queries_used
     << ',' << fmt(r.clip_fraction) << ',' << fmt(r.approx_kl);
  return os.str();
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << metrics_header() << '\n';
  for (const auto& r : rows) out << metrics_line(r) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != metrics_header()) {
    throw ConfigError("unexpected metrics header in " + path);
  }
  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 13) throw ConfigError(path + ": line " + std::to_string(lineno) + " has " + std::to_string(f.size()) + " fields");
    try {
      MetricsRow r;
      r.iteration = std::stoll(f[0]);
      r.env_steps = std::stoll(f[1]);
      r.mean_return = std::stod(f[2]);
      r.success_rate = std::stod(f[3]);
      r.mean_abs_adv = std::stod(f[4]);
      r.mean_utility = std::stod(f[5]);
      r.eta = std::stod(f[6]);
      r.xi = std::stod(f[7]);
      r.delta = std::stod(f[8]);
      r.graph_size = std::stoll(f[9]);
      r.online_queries_used = std::stoll(f[10]);
      r.clip_fraction = std::stod(f[11]);
      r.approx_kl = std::stod(f[12]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw ConfigError(path + ": malformed number on line " + std::to_string(lineno));
    }
  }
  return rows;
}

std::unique_ptr<Provider> make_provider(const GuidanceConfig& g) {
  if (g.provider == "oracle") return std::make_unique<OracleProvider>(0.0);
  if (g.provider == "fixture") return std::make_unique<FixtureProvider>(g.fixture_file);
  if (g.provider == "http") {
    HttpProviderConfig h;
    h.base_url = g.http_base_url;
    h.model = g.http_model;
    if (!g.prompt_file.empty()) {
      std::ifstream in(g.prompt_file);
      if (!in) throw ConfigError("cannot open prompt file: " + g.prompt_file);
      std::stringstream ss;
      ss << in.rdbuf();
      h.prompt_template = ss.str();
    }
    return std::make_unique<HttpProvider>(h);
  }
  return nullptr;
}

TrainResult train(const TrainConfig& cfg, TrainOptions opts) {
  cfg.validate();
  const GridSpec spec = cfg.grid_spec();
  const std::uint64_t seed = cfg.run.seed;
  const std::int64_t T = cfg.run.iterations;
  auto log = [&](const std::string& s) {
    if (opts.log) opts.log(s);
  };

  TrainResult res;
  res.policy = Policy(policy_shape(cfg, spec), derive_seed(seed, kStreamPolicy));
  res.optimizer = Adam(res.policy.size());
  res.graph = MemoryGraph(cfg.graph_params());
  if (cfg.guidance.online_cap >= 0) res.budget.online_cap = cfg.guidance.online_cap;

  EnvPool pool{spec, train_layout_seeds(cfg), 0};
  const auto eval_seeds = eval_layout_seeds(cfg);
  std::int64_t start_iter = 0;

  if (!cfg.guidance.priors_file.empty()) {
    res.graph = load_graph(cfg.guidance.priors_file, cfg.graph_params());
  }
  seed_goals(res.graph, spec, kFinalGoal);
  if (cfg.guidance.offline_priors) {
    std::vector<std::uint64_t> covered = pool.layout_seeds;
    if (cfg.guidance.offline_layouts > 0 &&
        static_cast<size_t>(cfg.guidance.offline_layouts) < covered.size()) {
      covered.resize(static_cast<size_t>(cfg.guidance.offline_layouts));
    }
    add_offline_priors(res.graph, spec, covered, cfg.guidance.offline_phases,
                       cfg.guidance.offline_confidence, kFinalGoal, res.budget);
  }
  if (opts.resume) {
    Checkpoint ck = load_checkpoint(*opts.resume);
    if (!(ck.policy.shape() == res.policy.shape())) {
      throw ConfigError("checkpoint policy shape does not match the config: " + *opts.resume);
    }
    res.policy = std::move(ck.policy);
    res.optimizer = std::move(ck.optimizer);
    start_iter = ck.iteration + 1;
    const std::string graph_path = *opts.resume + ".graph.json";
    if (fs::exists(graph_path)) res.graph = load_graph(graph_path, cfg.graph_params());
  }

  std::unique_ptr<Provider> provider =
      opts.provider ? std::move(opts.provider) : make_provider(cfg.guidance);
  auto* oracle = dynamic_cast<OracleProvider*>(provider.get());
  const double base_corruption = oracle ? oracle->corruption_rate() : 0.0;

  const ShapingSchedule schedule = cfg.schedule();
  const AlignmentMode mode = cfg.alignment();
  const SubgoalPhase target_goal = res.graph.tokens_of(kFinalGoal);
  TriggerState trigger{0, cfg.guidance.trigger_n};
  std::deque<double> recent_returns;
  std::int64_t episodes_done = 0;
  std::int64_t env_steps = 0;

  std::ofstream metrics_out;
  std::ofstream eval_out;
  if (!opts.run_dir.empty()) {
    fs::create_directories(fs::path(opts.run_dir) / "checkpoints");
    std::ofstream(fs::path(opts.run_dir) / "config.toml") << config_to_text(cfg);
    metrics_out.open(fs::path(opts.run_dir) / "metrics.csv");
    metrics_out << metrics_header() << '\n';
    eval_out.open(fs::path(opts.run_dir) / "eval.csv");
    eval_out << "iteration,mean_return,std_return,success_rate,std_success\n";
  }
  auto save_ckpt = [&](std::int64_t k) {
    if (opts.run_dir.empty()) return;
    const auto p = fs::path(opts.run_dir) / "checkpoints" / ("ckpt_" + std::to_string(k) + ".bin");
    save_checkpoint({res.policy, res.optimizer, k, config_to_text(cfg)}, p.string());
    save_graph(res.graph, p.string() + ".graph.json");
  };

  for (std::int64_t k = start_iter; k < T; ++k) {
    try {
      Rng rollout_rng(derive_seed(seed, kStreamRollout * 0x100000000ULL + static_cast<std::uint64_t>(k)));
      Rng update_rng(derive_seed(seed, kStreamUpdate * 0x100000000ULL + static_cast<std::uint64_t>(k)));
      Rng guidance_rng(derive_seed(seed, kStreamGuidance * 0x100000000ULL + static_cast<std::uint64_t>(k)));

      const MemoryGraph snapshot = res.graph;
      RolloutBatch batch =
          collect_rollouts(res.policy, pool, cfg.ppo.batch_size, rollout_rng, res.penalties, cfg.ppo.penalty_cap);

      // Utility per phase run of each episode, tail-aligned within the run.
      std::vector<double> utility(batch.size(), 0.0);
      std::optional<size_t> fired_episode;
      if (cfg.shaping.enabled) {
        std::vector<AnnotatedTransition> run;
        for (size_t e = 0; e < batch.episodes.size(); ++e) {
          const EpisodeRecord& ep = batch.episodes[e];
          double ep_sum = 0.0;
          for (size_t j = 0; j < ep.phase_starts.size(); ++j) {
            const size_t b = ep.phase_starts[j];
            const size_t end = j + 1 < ep.phase_starts.size() ? ep.phase_starts[j + 1] : ep.end;
            run.clear();
            for (size_t i = b; i < end; ++i) run.push_back(batch.steps[i].transition);
            const UtilityVector u =
                match_rollout(snapshot, ep.layout_id, run.front().phase, run, target_goal, mode);
            for (size_t i = 0; i < u.values.size(); ++i) {
              utility[b + i] = u.values[i];
              ep_sum += u.values[i];
            }
            if (u.matched_node && res.graph.node(*u.matched_node)) {
              res.graph.record_access(*u.matched_node, episodes_done + static_cast<std::int64_t>(e));
            }
          }
          if (trigger.check(ep_sum) && !fired_episode) fired_episode = e;
        }
      }

      const std::vector<double> adv = batch_advantages(batch, cfg.ppo.gamma, cfg.ppo.lambda);
      std::vector<double> returns(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) returns[i] = adv[i] + batch.steps[i].value;

      MetricsRow row;
      row.iteration = k;
      std::vector<double> shaped;
      if (cfg.shaping.enabled) {
        AdvantageBatch ab = shaped_advantage(adv, utility, schedule, k);
        shaped = std::move(ab.shaped);
        row.eta = ab.eta;
        row.xi = ab.xi;
      } else {
        shaped = adv;
        row.eta = 1.0;
        row.xi = 0.0;
      }
      row.delta = row.xi / row.eta;

      const UpdateDiagnostics diag =
          shaped_ppo_update(res.policy, res.optimizer, batch, shaped, returns, cfg.ppo, update_rng);

      // High-return agent episodes are offered to the graph, one segment per phase run.
      if (cfg.shaping.enabled) {
        for (size_t e = 0; e < batch.episodes.size(); ++e) {
          const EpisodeRecord& ep = batch.episodes[e];
          const bool qualifies =
              !recent_returns.empty() && ep.ret > 0.0 &&
              ep.ret > percentile({recent_returns.begin(), recent_returns.end()}, cfg.memgraph.insert_percentile);
          recent_returns.push_back(ep.ret);
          if (recent_returns.size() > static_cast<size_t>(cfg.memgraph.insert_window)) recent_returns.pop_front();
          if (!qualifies) continue;
          for (size_t j = 0; j < ep.phase_starts.size(); ++j) {
            const bool last = j + 1 == ep.phase_starts.size();
            if (last && !ep.success) continue;
            const size_t end = last ? ep.end : ep.phase_starts[j + 1];
            const size_t b = std::max(ep.phase_starts[j],
                                      end - std::min(end - ep.phase_starts[j],
                                                     static_cast<size_t>(cfg.memgraph.max_segment_len)));
            const EnvState& at = ep.phase_states[j];
            const SubgoalPhase phase = batch.steps[b].transition.phase;
            const auto target = phase_target(spec, at, phase);
            if (!target) continue;
            InsertRequest req;
            req.layout_id = ep.layout_id;
            for (size_t i = b; i < end; ++i) req.segment.push_back(batch.steps[i].transition);
            req.zeta = zeta_for(res.graph, phase);
            req.r_hat = estimate_subgoal_reward(spec, at, req.segment, *target);
            req.confidence = cfg.memgraph.agent_confidence;
            req.source = Source::kAgent;
            req.episode = episodes_done + static_cast<std::int64_t>(e);
            if (req.r_hat > 0.0) res.graph.insert_or_update(req);
          }
        }
      }
      episodes_done += static_cast<std::int64_t>(batch.episodes.size());
      res.graph.prune(episodes_done);

      if (fired_episode && provider) {
        const EpisodeRecord& ep = batch.episodes[*fired_episode];
        const bool corrupt_phase = cfg.guidance.corruption_rate > 0.0 &&
                                   static_cast<double>(k) >= cfg.guidance.corruption_after_frac * static_cast<double>(T);
        if (oracle) oracle->set_corruption_rate(corrupt_phase ? cfg.guidance.corruption_rate : base_corruption);
        ScreeningConfig sc;
        sc.enabled = cfg.guidance.screening && !(corrupt_phase && !cfg.guidance.screening_after_corruption);
        sc.likelihood_threshold = cfg.guidance.likelihood_threshold;
        sc.consistency_threshold = cfg.guidance.consistency_threshold;
        if (!res.budget.online_available()) {
          log("iteration " + std::to_string(k) + ": trigger fired but the online budget is exhausted");
        } else {
          const SubgoalPhase phase = subgoal_phase(spec, ep.anchor);
          const QueryContext ctx = build_context(spec, ep, phase);
          try {
            const auto completions = provider->complete(ctx, cfg.guidance.k, guidance_rng);
            res.budget.charge_online();
            const ScreenOutcome so = screen(completions, spec.family, sc, provider->id());
            if (so.suggestion) {
              ApplyParams ap;
              ap.final_goal = kFinalGoal;
              ap.penalty_magnitude = cfg.guidance.penalty_magnitude;
              ap.penalty_steps = cfg.guidance.penalty_steps;
              ap.penalty_cap = cfg.ppo.penalty_cap;
              ap.episode = episodes_done;
              const ApplyOutcome out =
                  apply_suggestion(*so.suggestion, so.result, res.graph, res.penalties, spec, ep.anchor, ap);
              log("iteration " + std::to_string(k) + ": online suggestion " + out.note);
            } else {
              log("iteration " + std::to_string(k) + ": online suggestion rejected (score " +
                  fmt(so.result.score) + ")");
            }
          } catch (const TransportError& e) {
            log("iteration " + std::to_string(k) + ": provider error, query not charged: " + e.what());
          }
        }
      }

      double mean_abs = 0.0;
      double mean_u = 0.0;
      for (size_t i = 0; i < batch.size(); ++i) {
        mean_abs += std::abs(adv[i]);
        mean_u += utility[i];
      }
      env_steps += static_cast<std::int64_t>(batch.size());
      double ret_sum = 0.0;
      double succ = 0.0;
      for (const auto& ep : batch.episodes) {
        ret_sum += ep.ret;
        succ += ep.success ? 1.0 : 0.0;
      }
      const double n_ep = static_cast<double>(batch.episodes.size());
      row.env_steps = env_steps;
      row.mean_return = ret_sum / n_ep;
      row.success_rate = succ / n_ep;
      row.mean_abs_adv = mean_abs / static_cast<double>(batch.size());
      row.mean_utility = mean_u / static_cast<double>(batch.size());
      row.graph_size = static_cast<std::int64_t>(res.graph.size());
      row.online_queries_used = res.budget.online_used;
      row.clip_fraction = diag.clip_fraction;
      row.approx_kl = diag.approx_kl;
      res.rows.push_back(row);
      if (metrics_out.is_open()) metrics_out << metrics_line(row) << '\n' << std::flush;

      const bool last = k + 1 == T;
      if ((cfg.run.eval_interval > 0 && (k + 1) % cfg.run.eval_interval == 0) || last) {
        EvalRow er{k, evaluate(res.policy, spec, eval_seeds, cfg.run.eval_episodes, derive_seed(seed, kStreamEval))};
        res.evals.push_back(er);
        if (eval_out.is_open()) {
          eval_out << k << ',' << fmt(er.result.mean_return) << ',' << fmt(er.result.std_return) << ','
                   << fmt(er.result.success_rate) << ',' << fmt(er.result.std_success) << '\n'
                   << std::flush;
        }
      }
      if ((cfg.run.checkpoint_interval > 0 && (k + 1) % cfg.run.checkpoint_interval == 0) || last) {
        save_ckpt(k);
      }
      if ((k + 1) % 50 == 0 || last) {
        log("iteration " + std::to_string(k + 1) + "/" + std::to_string(T) + " return " +
            fmt(row.mean_return) + " success " + fmt(row.success_rate) + " graph " +
            std::to_string(row.graph_size));
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      if (!opts.run_dir.empty()) {
        std::ofstream(fs::path(opts.run_dir) / "error.txt")
            << "iteration " << k << ": " << e.what() << '\n';
        save_graph(res.graph, (fs::path(opts.run_dir) / "graph_at_error.json").string());
      }
      throw TrainError("iteration " + std::to_string(k) + ": " + e.what(), k);
    }
  }

  if (!opts.run_dir.empty()) {
    save_graph(res.graph, (fs::path(opts.run_dir) / "graph_final.json").string());
    Series ret{"mean return", {}, {}, {}};
    Series sr{"success rate", {}, {}, {}};
    for (const auto& r : res.rows) {
      ret.x.push_back(static_cast<double>(r.iteration));
      ret.y.push_back(r.mean_return);
      sr.x.push_back(static_cast<double>(r.iteration));
      sr.y.push_back(r.success_rate);
    }
    write_svg(svg_chart({ret, sr}, "learning curve", "iteration", "value"),
              (fs::path(opts.run_dir) / "learning_curve.svg").string());
  }
  return res;
}

}  // namespace mira
