#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "mira/config.hpp"
#include "mira/plot.hpp"
#include "mira/trainer.hpp"
#include "mira/utility.hpp"

namespace mira {

namespace fs = std::filesystem;

namespace {

std::string default_out_dir() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream os;
  os << "runs/" << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

std::string config_help() {
  std::ostringstream os;
  os << "Config keys (files and --set section.key=value):\n";
  for (const auto& k : config_keys()) {
    os << "  " << std::left << std::setw(40) << k.name << std::setw(12) << k.type << k.help << '\n';
  }
  return os.str();
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
    }
  }
  if (out.empty()) throw ConfigError("--seeds: expected a comma-separated list such as \"1,2,3\"");
  return out;
}

void require_file(const std::string& flag, const std::string& path) {
  if (!fs::is_regular_file(path)) throw ConfigError(flag + ": file not found: " + path);
}

struct TrainFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string priors;
  std::string provider;
  std::optional<std::int64_t> online_cap;
  std::string out;
  std::vector<std::string> sets;
  std::string resume;
  std::string layout_file;
};

TrainConfig build_config(const std::string& path, const TrainFlags& f) {
  require_file("--config", path);
  TrainConfig cfg = load_config(path);
  for (const auto& s : f.sets) apply_override(cfg, s);
  if (f.seed) cfg.run.seed = *f.seed;
  if (!f.priors.empty()) {
    require_file("--priors", f.priors);
    cfg.guidance.priors_file = f.priors;
  }
  if (!f.provider.empty()) cfg.guidance.provider = f.provider;
  if (f.online_cap) cfg.guidance.online_cap = *f.online_cap;
  if (!f.layout_file.empty()) {
    require_file("--layout-file", f.layout_file);
    cfg.env.layout_file = f.layout_file;
    if (cfg.env.name != "lake-file" && cfg.env.name != "grid-file") {
      cfg.env.name = cfg.env.name == "lake" ? "lake-file" : "grid-file";
    }
  }
  cfg.validate();
  return cfg;
}

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--seed", f.seed, "Run seed (run.seed)");
  app->add_option("--priors", f.priors, "Offline-prior graph JSON loaded at startup");
  app->add_option("--provider", f.provider, "Guidance provider")
      ->check(CLI::IsMember({"none", "oracle", "fixture", "http"}));
  app->add_option("--online-cap", f.online_cap, "Online query cap (negative = unlimited)");
  app->add_option("--out", f.out, "Output directory (default ./runs/<timestamp>)");
  app->add_option("--set", f.sets, "Override a config key, section.key=value (repeatable)");
  app->add_option("--layout-file", f.layout_file, "Plain-text layout grid");
}

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = build_config(f.config, f);
  TrainOptions opts;
  opts.run_dir = f.out.empty() ? default_out_dir() : f.out;
  if (!f.resume.empty()) {
    require_file("--resume", f.resume);
    opts.resume = f.resume;
  }
  opts.log = [&err](const std::string& s) { err << s << '\n'; };
  const TrainResult r = train(cfg, std::move(opts));
  out << "run directory: " << (f.out.empty() ? "runs/" : f.out) << '\n';
  out << "final return " << final_return(r.rows) << ", online queries " << r.budget.online_used
      << ", graph nodes " << r.graph.size() << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& seeds, const std::string& config_path,
             int episodes, std::ostream& out) {
  require_file("--ckpt", ckpt);
  const Checkpoint ck = load_checkpoint(ckpt);
  TrainConfig cfg = config_path.empty() ? parse_config(ck.config_text) : load_config(config_path);
  const auto layout_seeds = seeds.empty() ? eval_layout_seeds(cfg) : parse_seed_list(seeds);
  const GridSpec spec = cfg.grid_spec();
  out << "layout_seed,mean_return,success_rate\n";
  for (auto s : layout_seeds) {
    const EvalResult r = evaluate(ck.policy, spec, {s}, episodes, cfg.run.seed);
    out << s << ',' << r.mean_return << ',' << r.success_rate << '\n';
  }
  const EvalResult all = evaluate(ck.policy, spec, layout_seeds, episodes, cfg.run.seed);
  out << "all," << all.mean_return << ',' << all.success_rate << '\n';
  return 0;
}

int cmd_compare(const std::vector<std::string>& configs, int n_seeds, TrainFlags f,
                std::ostream& out, std::ostream& err) {
  if (configs.empty()) throw ConfigError("--configs: expected a comma-separated list of files");
  if (n_seeds < 1) throw ConfigError("--seeds: must be at least 1");
  const std::string dir = f.out.empty() ? default_out_dir() : f.out;
  std::vector<std::pair<std::string, TrainConfig>> cfgs;
  for (const auto& c : configs) cfgs.emplace_back(fs::path(c).stem().string(), build_config(c, f));
  fs::create_directories(dir);

  std::map<std::pair<std::string, int>, std::vector<MetricsRow>> runs;
  for (const auto& [label, base] : cfgs) {
    for (int s = 0; s < n_seeds; ++s) {
      TrainConfig cfg = base;
      cfg.run.seed = base.run.seed + static_cast<std::uint64_t>(s);
      TrainOptions opts;
      opts.run_dir = (fs::path(dir) / label / ("seed_" + std::to_string(s))).string();
      opts.log = [&err, label = label, s](const std::string& line) {
        err << label << " seed " << s << ": " << line << '\n';
      };
      runs[{label, s}] = train(cfg, std::move(opts)).rows;
    }
  }

  std::ofstream csv(fs::path(dir) / "compare.csv");
  csv << "config,seed,iteration,env_steps,mean_return,success_rate,eta,xi,delta\n";
  for (const auto& [key, rows] : runs) {
    for (const auto& r : rows) {
      csv << key.first << ',' << key.second << ',' << r.iteration << ',' << r.env_steps << ','
          << r.mean_return << ',' << r.success_rate << ',' << r.eta << ',' << r.xi << ',' << r.delta
          << '\n';
    }
  }
  std::vector<Series> series;
  std::ofstream summary(fs::path(dir) / "summary.csv");
  summary << "config,iteration,mean_return,std_return\n";
  for (const auto& [label, cfg] : cfgs) {
    Series sr{label, {}, {}, {}};
    const size_t n = runs[{label, 0}].size();
    for (size_t i = 0; i < n; ++i) {
      double m = 0.0, sq = 0.0;
      for (int s = 0; s < n_seeds; ++s) m += runs[{label, s}][i].mean_return;
      m /= n_seeds;
      for (int s = 0; s < n_seeds; ++s) {
        const double d = runs[{label, s}][i].mean_return - m;
        sq += d * d;
      }
      const double sd = std::sqrt(sq / n_seeds);
      sr.x.push_back(static_cast<double>(i));
      sr.y.push_back(m);
      sr.spread.push_back(sd);
      summary << label << ',' << i << ',' << m << ',' << sd << '\n';
    }
    double fin = 0.0;
    for (int s = 0; s < n_seeds; ++s) fin += final_return(runs[{label, s}]);
    out << label << ": final return " << fin / n_seeds << " over " << n_seeds << " seeds\n";
    series.push_back(std::move(sr));
  }
  write_svg(svg_chart(series, "mean return (mean +/- std over seeds)", "iteration", "return"),
            (fs::path(dir) / "compare.svg").string());
  out << "wrote " << (fs::path(dir) / "compare.csv").string() << " and compare.svg\n";
  return 0;
}

int cmd_inspect_graph(const std::string& path, std::ostream& out) {
  require_file("--graph", path);
  const MemoryGraph g = load_graph(path);
  out << "final goals:\n";
  for (const auto& fg : g.final_goals()) out << "  " << fg.id << "  " << fg.description << "  [" << fg.tokens.str() << "]\n";
  out << "subgoals:\n";
  for (const auto& sg : g.subgoals()) {
    out << "  " << sg.id << "  " << sg.description << "  [" << sg.tokens.str() << "] under " << sg.parent_goal << '\n';
  }
  out << "trajectory nodes: " << g.size() << '\n';
  out << std::left << std::setw(6) << "id" << std::setw(8) << "zeta" << std::setw(12) << "source"
      << std::setw(8) << "len" << std::setw(9) << "r_hat" << std::setw(9) << "conf" << std::setw(8)
      << "access" << std::setw(8) << "last" << "layout\n";
  for (const auto& n : g.trajectory_nodes()) {
    std::ostringstream rh, cf;
    rh << std::setprecision(3) << n.r_hat;
    cf << std::setprecision(3) << n.confidence;
    out << std::left << std::setw(6) << n.id << std::setw(8) << n.zeta << std::setw(12)
        << source_name(n.source) << std::setw(8) << n.segment.size() << std::setw(9) << rh.str()
        << std::setw(9) << cf.str() << std::setw(8) << n.access_count << std::setw(8)
        << n.last_access_episode << std::hex << n.layout_id << std::dec << '\n';
  }
  return 0;
}

int cmd_inspect_utility(const std::string& config_path, const std::string& graph_path,
                        const std::string& ckpt, int layout_index, std::uint64_t seed,
                        const std::string& out_path, std::ostream& out) {
  require_file("--config", config_path);
  require_file("--graph", graph_path);
  const TrainConfig cfg = load_config(config_path);
  const GridSpec spec = cfg.grid_spec();
  const MemoryGraph graph = load_graph(graph_path, cfg.graph_params());
  Policy policy;
  if (!ckpt.empty()) {
    require_file("--ckpt", ckpt);
    policy = load_checkpoint(ckpt).policy;
  } else {
    PolicyShape shape;
    shape.kind = cfg.run.policy == "network" ? PolicyKind::kNetwork : PolicyKind::kTabular;
    shape.n_features = feature_count(spec);
    shape.n_actions = action_count(spec.family);
    shape.hidden = cfg.run.hidden;
    shape.active_features = spec.family == Family::kTabular ? 1 : spec.view_size * spec.view_size + 1;
    policy = Policy(shape, cfg.run.seed);
  }
  const auto layouts = train_layout_seeds(cfg);
  if (layout_index < 0 || layout_index >= static_cast<int>(layouts.size())) {
    throw ConfigError("--layout: index out of range (0.." + std::to_string(layouts.size() - 1) + ")");
  }
  EnvPool pool{spec, {layouts[static_cast<size_t>(layout_index)]}, 0};
  Rng rng(seed);
  const RolloutBatch batch = collect_rollouts(policy, pool, 1, rng);
  const EpisodeRecord& ep = batch.episodes.front();
  const SubgoalPhase target = graph.has_zeta("g0") ? graph.tokens_of("g0") : SubgoalPhase{};

  std::ofstream file;
  if (!out_path.empty()) file.open(out_path);
  std::ostream& os = out_path.empty() ? out : file;
  os << "t,phase,node,s,rho,U\n";
  for (size_t j = 0; j < ep.phase_starts.size(); ++j) {
    const size_t b = ep.phase_starts[j];
    const size_t end = j + 1 < ep.phase_starts.size() ? ep.phase_starts[j + 1] : ep.end;
    std::vector<AnnotatedTransition> run;
    for (size_t i = b; i < end; ++i) run.push_back(batch.steps[i].transition);
    const auto u = match_rollout(graph, ep.layout_id, run.front().phase, run, target, cfg.alignment());
    UtilityTrace trace;
    const TrajectoryNode* node = u.matched_node ? graph.node(*u.matched_node) : nullptr;
    if (node) compute_utility(run, *node, graph.tokens_of(node->zeta), target, cfg.alignment(), &trace);
    for (size_t i = 0; i < run.size(); ++i) {
      os << b + i << ',' << run[i].phase.str() << ',' << (node ? std::to_string(node->id) : "-") << ','
         << (node ? trace.sim[i] : 0.0) << ',' << (node ? trace.rho[i] : 0.0) << ',' << u.values[i]
         << '\n';
    }
  }
  if (!out_path.empty()) out << "wrote " << ep.length() << " rows to " << out_path << '\n';
  return 0;
}

int cmd_plot(const std::string& metrics, const std::string& out_path, std::ostream& out) {
  require_file("--metrics", metrics);
  const auto rows = read_metrics_csv(metrics);
  Series ret{"mean return", {}, {}, {}}, sr{"success rate", {}, {}, {}}, delta{"delta", {}, {}, {}};
  for (const auto& r : rows) {
    const double x = static_cast<double>(r.iteration);
    ret.x.push_back(x), ret.y.push_back(r.mean_return);
    sr.x.push_back(x), sr.y.push_back(r.success_rate);
    delta.x.push_back(x), delta.y.push_back(r.delta);
  }
  const std::string dest =
      out_path.empty() ? (fs::path(metrics).parent_path() / "curves.svg").string() : out_path;
  write_svg(svg_chart({ret, sr, delta}, fs::path(metrics).parent_path().filename().string(),
                      "iteration", "value"),
            dest);
  out << "wrote " << dest << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"mira: PPO with memory-graph advantage shaping and LLM guidance", "mira"};
  app.require_subcommand(1, 1);
  app.footer(config_help() + "\nExit codes: 0 success, 2 config or usage error, 3 runtime failure.\n"
             "The http provider reads its key from MIRA_LLM_API_KEY.");

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train one run");
  train_cmd->add_option("--config", tf.config, "Config file")->required();
  add_train_flags(train_cmd, tf);
  train_cmd->add_option("--resume", tf.resume, "Checkpoint to resume from");

  std::string ckpt, seeds, eval_config;
  int episodes = 10;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--seeds", seeds, "Layout seeds, e.g. \"1,2,3\" (default: held-out set)");
  eval_cmd->add_option("--config", eval_config, "Config (default: the one stored in the checkpoint)");
  eval_cmd->add_option("--episodes", episodes, "Episodes per layout")->check(CLI::PositiveNumber);

  TrainFlags cf;
  std::vector<std::string> configs;
  int n_seeds = 4;
  auto* cmp_cmd = app.add_subcommand("compare", "Train several configs over seeds and overlay curves");
  cmp_cmd->add_option("--configs", configs, "Config files, comma separated")->required()->delimiter(',');
  cmp_cmd->add_option("--seeds", n_seeds, "Seeds per config (run.seed, run.seed+1, ...)");
  add_train_flags(cmp_cmd, cf);

  std::string graph_path;
  auto* ig_cmd = app.add_subcommand("inspect-graph", "Print the nodes of a graph JSON file");
  ig_cmd->add_option("--graph", graph_path, "Graph JSON")->required();

  std::string iu_config, iu_graph, iu_ckpt, iu_out;
  int iu_layout = 0;
  std::uint64_t iu_seed = 0;
  auto* iu_cmd = app.add_subcommand("inspect-utility", "Per-step utility CSV for one sampled episode");
  iu_cmd->add_option("--config", iu_config, "Config file")->required();
  iu_cmd->add_option("--graph", iu_graph, "Graph JSON")->required();
  iu_cmd->add_option("--ckpt", iu_ckpt, "Policy checkpoint (default: freshly initialised policy)");
  iu_cmd->add_option("--layout", iu_layout, "Index into the training layouts");
  iu_cmd->add_option("--seed", iu_seed, "Rollout seed");
  iu_cmd->add_option("--out", iu_out, "CSV path (default: stdout)");

  std::string metrics_path, plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "SVG curves from a metrics.csv");
  plot_cmd->add_option("--metrics", metrics_path, "metrics.csv")->required();
  plot_cmd->add_option("--out", plot_out, "SVG path (default: curves.svg next to the metrics)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << " (see --help)\n";
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(tf, out, err);
    if (eval_cmd->parsed()) return cmd_eval(ckpt, seeds, eval_config, episodes, out);
    if (cmp_cmd->parsed()) return cmd_compare(configs, n_seeds, cf, out, err);
    if (ig_cmd->parsed()) return cmd_inspect_graph(graph_path, out);
    if (iu_cmd->parsed()) {
      return cmd_inspect_utility(iu_config, iu_graph, iu_ckpt, iu_layout, iu_seed, iu_out, out);
    }
    if (plot_cmd->parsed()) return cmd_plot(metrics_path, plot_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace mira
