#include "mira/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace mira {

namespace {

// A value as written: a scalar token or a list of tokens. Strings keep quotes
// stripped; `quoted` remembers whether they had them.
struct Value {
  bool is_list = false;
  std::vector<std::string> items;
  std::vector<bool> quoted;
};

std::string trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

void push_token(Value& v, const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') {
    v.items.push_back(t.substr(1, t.size() - 2));
    v.quoted.push_back(true);
  } else {
    if (t.empty()) throw ConfigError(where + ": empty value");
    v.items.push_back(t);
    v.quoted.push_back(false);
  }
}

Value parse_value(const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  Value v;
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw ConfigError(where + ": unterminated list");
    v.is_list = true;
    const std::string inner = trim(std::string_view(t).substr(1, t.size() - 2));
    if (inner.empty()) return v;
    std::string cur;
    bool in_str = false;
    for (char ch : inner) {
      if (ch == '"') in_str = !in_str;
      if (ch == ',' && !in_str) {
        push_token(v, cur, where);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    push_token(v, cur, where);
    return v;
  }
  push_token(v, t, where);
  return v;
}

const std::string& scalar(const Value& v, const std::string& where) {
  if (v.is_list || v.items.size() != 1) throw ConfigError(where + ": expected a single value");
  return v.items.front();
}

double to_double(const std::string& s, const std::string& where) {
  try {
    size_t used = 0;
    const double d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + s + "'");
  }
}

template <typename I>
I to_int(const std::string& s, const std::string& where) {
  I v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(where + ": expected an integer, got '" + s + "'");
  }
  return v;
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

struct KeyDef {
  ConfigKey info;
  std::function<void(TrainConfig&, const Value&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
struct Conv;

template <>
struct Conv<double> {
  static constexpr const char* kType = "number";
  static void set(double& x, const Value& v, const std::string& w) { x = to_double(scalar(v, w), w); }
  static std::string get(double x) { return fmt_double(x); }
};
template <>
struct Conv<int> {
  static constexpr const char* kType = "integer";
  static void set(int& x, const Value& v, const std::string& w) { x = to_int<int>(scalar(v, w), w); }
  static std::string get(int x) { return std::to_string(x); }
};
template <>
struct Conv<std::int64_t> {
  static constexpr const char* kType = "integer";
  static void set(std::int64_t& x, const Value& v, const std::string& w) {
    x = to_int<std::int64_t>(scalar(v, w), w);
  }
  static std::string get(std::int64_t x) { return std::to_string(x); }
};
template <>
struct Conv<std::uint64_t> {
  static constexpr const char* kType = "integer";
  static void set(std::uint64_t& x, const Value& v, const std::string& w) {
    x = to_int<std::uint64_t>(scalar(v, w), w);
  }
  static std::string get(std::uint64_t x) { return std::to_string(x); }
};
template <>
struct Conv<bool> {
  static constexpr const char* kType = "bool";
  static void set(bool& x, const Value& v, const std::string& w) {
    const auto& s = scalar(v, w);
    if (s == "true") {
      x = true;
    } else if (s == "false") {
      x = false;
    } else {
      throw ConfigError(w + ": expected true or false, got '" + s + "'");
    }
  }
  static std::string get(bool x) { return x ? "true" : "false"; }
};
template <>
struct Conv<std::string> {
  static constexpr const char* kType = "string";
  static void set(std::string& x, const Value& v, const std::string& w) { x = scalar(v, w); }
  static std::string get(const std::string& x) { return quote(x); }
};
template <>
struct Conv<std::vector<double>> {
  static constexpr const char* kType = "number list";
  static void set(std::vector<double>& x, const Value& v, const std::string& w) {
    x.clear();
    for (const auto& s : v.items) x.push_back(to_double(s, w));
  }
  static std::string get(const std::vector<double>& x) {
    std::string out = "[";
    for (size_t i = 0; i < x.size(); ++i) out += (i ? ", " : "") + fmt_double(x[i]);
    return out + "]";
  }
};
template <>
struct Conv<std::vector<std::string>> {
  static constexpr const char* kType = "string list";
  static void set(std::vector<std::string>& x, const Value& v, const std::string&) { x = v.items; }
  static std::string get(const std::vector<std::string>& x) {
    std::string out = "[";
    for (size_t i = 0; i < x.size(); ++i) out += (i ? ", " : "") + quote(x[i]);
    return out + "]";
  }
};

template <typename F>
KeyDef make_key(std::string name, std::string help, F field) {
  using T = std::remove_cvref_t<decltype(field(std::declval<TrainConfig&>()))>;
  KeyDef k;
  k.info = {name, Conv<T>::kType, std::move(help)};
  k.set = [field](TrainConfig& c, const Value& v, const std::string& w) { Conv<T>::set(field(c), v, w); };
  k.get = [field](const TrainConfig& c) { return Conv<T>::get(field(const_cast<TrainConfig&>(c))); };
  return k;
}

#define MIRA_KEY(name, member, help) \
  make_key(name, help, [](TrainConfig& c) -> auto& { return c.member; })

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> keys = {
      MIRA_KEY("env.name", env.name,
               "lake | doorkey | distracted-doorkey | redball | lavacrossing | lake-file | grid-file"),
      MIRA_KEY("env.size", env.size, "grid side length for generated layouts"),
      MIRA_KEY("env.slip_prob", env.slip_prob, "lake: probability a move turns perpendicular"),
      MIRA_KEY("env.max_steps", env.max_steps, "episode horizon; 0 = family default"),
      MIRA_KEY("env.view_size", env.view_size, "egocentric window side"),
      MIRA_KEY("env.layout_file", env.layout_file, "layout for lake-file / grid-file"),
      MIRA_KEY("env.train_layouts", env.train_layouts, "number of training layouts cycled per run"),
      MIRA_KEY("env.eval_layouts", env.eval_layouts, "number of unseen layouts for evaluation"),
      MIRA_KEY("ppo.lr", ppo.lr, "Adam learning rate"),
      MIRA_KEY("ppo.batch_size", ppo.batch_size, "minimum steps per iteration (complete episodes)"),
      MIRA_KEY("ppo.minibatch_size", ppo.minibatch_size, "samples per gradient step"),
      MIRA_KEY("ppo.epochs", ppo.epochs, "passes over each batch"),
      MIRA_KEY("ppo.clip", ppo.clip, "ratio clip epsilon"),
      MIRA_KEY("ppo.ent_coef", ppo.ent_coef, "entropy bonus weight"),
      MIRA_KEY("ppo.vf_coef", ppo.vf_coef, "value loss weight"),
      MIRA_KEY("ppo.gamma", ppo.gamma, "discount"),
      MIRA_KEY("ppo.lambda", ppo.lambda, "GAE lambda"),
      MIRA_KEY("ppo.max_grad_norm", ppo.max_grad_norm, "global gradient norm clip; <= 0 disables"),
      MIRA_KEY("ppo.penalty_cap", ppo.penalty_cap, "largest logit penalty (nats)"),
      MIRA_KEY("shaping.enabled", shaping.enabled, "false = plain PPO, no utility computed"),
      MIRA_KEY("shaping.eta0", shaping.eta0, "initial advantage weight eta"),
      MIRA_KEY("shaping.xi0", shaping.xi0, "initial utility weight(s); a list holds each value in turn"),
      MIRA_KEY("shaping.delta", shaping.delta, "cap on xi/eta"),
      MIRA_KEY("shaping.decay", shaping.decay, "exponential | linear"),
      MIRA_KEY("shaping.horizon", shaping.horizon, "linear decay end (iterations); 0 = run length"),
      MIRA_KEY("shaping.eta_ramp_frac", shaping.eta_ramp_frac, "fraction of the run for eta to reach 1"),
      MIRA_KEY("shaping.xi_hold_frac", shaping.xi_hold_frac, "fraction of the run each listed xi is held"),
      MIRA_KEY("shaping.half_life_frac", shaping.half_life_frac, "xi half-life as a fraction of the run"),
      MIRA_KEY("shaping.rate", shaping.rate, "explicit per-iteration xi decay factor (overrides half-life)"),
      MIRA_KEY("shaping.adv_floor", shaping.adv_floor, "floor on the batch mean |A| scale"),
      MIRA_KEY("shaping.alignment", shaping.alignment, "phase (step phase vs node) | target (goal vs node)"),
      MIRA_KEY("memgraph.prune_window", memgraph.prune_window, "episodes without access before pruning"),
      MIRA_KEY("memgraph.confidence_bump", memgraph.confidence_bump, "confidence gain on agent validation"),
      MIRA_KEY("memgraph.max_per_key", memgraph.max_per_key, "segments kept per (layout, goal term)"),
      MIRA_KEY("memgraph.insert_percentile", memgraph.insert_percentile,
               "episodes above this return percentile are inserted"),
      MIRA_KEY("memgraph.insert_window", memgraph.insert_window, "episodes in the percentile window"),
      MIRA_KEY("memgraph.agent_confidence", memgraph.agent_confidence, "confidence of agent segments"),
      MIRA_KEY("memgraph.max_segment_len", memgraph.max_segment_len, "agent segments keep this many final steps"),
      MIRA_KEY("guidance.provider", guidance.provider, "none | oracle | fixture | http"),
      MIRA_KEY("guidance.offline_priors", guidance.offline_priors, "seed the graph from the offline oracle"),
      MIRA_KEY("guidance.offline_phases", guidance.offline_phases, "phases given offline segments: key, door, goal"),
      MIRA_KEY("guidance.offline_confidence", guidance.offline_confidence, "confidence of offline nodes"),
      MIRA_KEY("guidance.offline_layouts", guidance.offline_layouts,
               "training layouts covered by offline priors; 0 = all"),
      MIRA_KEY("guidance.priors_file", guidance.priors_file, "graph JSON merged in at startup"),
      MIRA_KEY("guidance.trigger_n", guidance.trigger_n, "zero-utility episodes before an online query"),
      MIRA_KEY("guidance.online_cap", guidance.online_cap, "online query budget; < 0 = unlimited"),
      MIRA_KEY("guidance.k", guidance.k, "completions per query"),
      MIRA_KEY("guidance.screening", guidance.screening, "screen online suggestions"),
      MIRA_KEY("guidance.likelihood_threshold", guidance.likelihood_threshold, "likelihood screening threshold"),
      MIRA_KEY("guidance.consistency_threshold", guidance.consistency_threshold, "agreement screening threshold"),
      MIRA_KEY("guidance.corruption_rate", guidance.corruption_rate, "oracle: chance a completion is random"),
      MIRA_KEY("guidance.corruption_after_frac", guidance.corruption_after_frac,
               "corruption applies from this fraction of the run"),
      MIRA_KEY("guidance.screening_after_corruption", guidance.screening_after_corruption,
               "keep screening once corruption starts"),
      MIRA_KEY("guidance.penalty_magnitude", guidance.penalty_magnitude, "logit penalty of control signals"),
      MIRA_KEY("guidance.penalty_steps", guidance.penalty_steps, "steps a control penalty lasts within a phase"),
      MIRA_KEY("guidance.fixture_file", guidance.fixture_file, "recorded completions for the fixture provider"),
      MIRA_KEY("guidance.http_base_url", guidance.http_base_url, "chat-completions server"),
      MIRA_KEY("guidance.http_model", guidance.http_model, "model name sent to the server"),
      MIRA_KEY("guidance.prompt_file", guidance.prompt_file, "prompt template with {env_description} {observations} {phase}"),
      MIRA_KEY("run.seed", run.seed, "run seed"),
      MIRA_KEY("run.iterations", run.iterations, "training iterations"),
      MIRA_KEY("run.eval_interval", run.eval_interval, "iterations between evaluations; 0 = never"),
      MIRA_KEY("run.eval_episodes", run.eval_episodes, "greedy episodes per evaluation layout"),
      MIRA_KEY("run.checkpoint_interval", run.checkpoint_interval, "iterations between checkpoints; 0 = final only"),
      MIRA_KEY("run.policy", run.policy, "tabular | network"),
      MIRA_KEY("run.hidden", run.hidden, "hidden units per layer of the network policy"),
  };
  return keys;
}

#undef MIRA_KEY

const KeyDef& find_key(const std::string& name, const std::string& where) {
  for (const auto& k : key_table()) {
    if (k.info.name == name) return k;
  }
  throw ConfigError(where + ": unknown config key '" + name + "'");
}

}  // namespace

std::vector<ConfigKey> config_keys() {
  std::vector<ConfigKey> out;
  for (const auto& k : key_table()) out.push_back(k.info);
  return out;
}

TrainConfig parse_config(const std::string& text, const TrainConfig& base) {
  TrainConfig cfg = base;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = "line " + std::to_string(lineno);
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    const KeyDef& def = find_key(full, where);
    def.set(cfg, parse_value(t.substr(eq + 1), where + " (" + full + ")"), where + " (" + full + ")");
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    TrainConfig cfg = parse_config(ss.str());
    return cfg;
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must look like key=value");
  const std::string key = trim(std::string_view(assignment).substr(0, eq));
  const std::string where = "override " + key;
  find_key(key, where).set(cfg, parse_value(assignment.substr(eq + 1), where), where);
}

std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& k : key_table()) {
    const auto dot = k.info.name.find('.');
    const std::string sec = k.info.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += k.info.name.substr(dot + 1) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

void TrainConfig::validate() const {
  static const std::vector<std::string> envs = {"lake",         "doorkey",   "distracted-doorkey",
                                                "redball",      "lavacrossing", "lake-file",
                                                "grid-file"};
  if (std::find(envs.begin(), envs.end(), env.name) == envs.end()) {
    throw ConfigError("env.name: unknown environment '" + env.name + "'");
  }
  if (env.train_layouts <= 0) throw ConfigError("env.train_layouts must be positive");
  if (env.eval_layouts <= 0) throw ConfigError("env.eval_layouts must be positive");
  if (env.max_steps < 0) throw ConfigError("env.max_steps must be >= 0");
  if (run.iterations <= 0) throw ConfigError("run.iterations must be positive");
  if (run.eval_interval < 0 || run.eval_episodes <= 0) throw ConfigError("run.eval_* out of range");
  if (run.policy != "tabular" && run.policy != "network") {
    throw ConfigError("run.policy must be tabular or network");
  }
  if (shaping.decay != "exponential" && shaping.decay != "linear") {
    throw ConfigError("shaping.decay must be exponential or linear");
  }
  if (shaping.alignment != "phase" && shaping.alignment != "target") {
    throw ConfigError("shaping.alignment must be phase or target");
  }
  if (shaping.eta_ramp_frac < 0 || shaping.xi_hold_frac < 0 || !(shaping.half_life_frac > 0)) {
    throw ConfigError("shaping fractions must be >= 0 (half-life > 0)");
  }
  if (memgraph.insert_percentile < 0 || memgraph.insert_percentile > 1) {
    throw ConfigError("memgraph.insert_percentile must be in [0, 1]");
  }
  if (memgraph.insert_window <= 0 || memgraph.max_segment_len <= 0 || memgraph.max_per_key <= 0) {
    throw ConfigError("memgraph window/segment/max_per_key must be positive");
  }
  if (memgraph.agent_confidence < 0 || memgraph.agent_confidence > 1 ||
      guidance.offline_confidence < 0 || guidance.offline_confidence > 1) {
    throw ConfigError("confidences must be in [0, 1]");
  }
  if (guidance.offline_layouts < 0) throw ConfigError("guidance.offline_layouts must be >= 0");
  static const std::vector<std::string> providers = {"none", "oracle", "fixture", "http"};
  if (std::find(providers.begin(), providers.end(), guidance.provider) == providers.end()) {
    throw ConfigError("guidance.provider must be none, oracle, fixture or http");
  }
  if (guidance.provider == "fixture" && guidance.fixture_file.empty()) {
    throw ConfigError("guidance.provider = fixture needs guidance.fixture_file");
  }
  for (const auto& p : guidance.offline_phases) {
    if (p != "key" && p != "door" && p != "goal") {
      throw ConfigError("guidance.offline_phases: unknown phase '" + p + "'");
    }
  }
  if (guidance.trigger_n <= 0 || guidance.k <= 0) throw ConfigError("guidance.trigger_n and k must be positive");
  if (guidance.corruption_rate < 0 || guidance.corruption_rate > 1) {
    throw ConfigError("guidance.corruption_rate must be in [0, 1]");
  }
  ppo.validate();
  grid_spec().validate();
  if (shaping.enabled) schedule().validate();
}

GridSpec TrainConfig::grid_spec() const {
  GridSpec spec;
  if (env.name == "lake") {
    if (env.size != 8) throw ConfigError("env.size: the lake map is 8x8");
    spec = lake_8x8(env.slip_prob);
  } else if (env.name == "doorkey") {
    spec = doorkey(env.size, false);
  } else if (env.name == "distracted-doorkey") {
    spec = doorkey(env.size, true);
  } else if (env.name == "redball") {
    spec = redball(env.size);
  } else if (env.name == "lavacrossing") {
    spec = lava_crossing(env.size);
  } else if (env.name == "lake-file" || env.name == "grid-file") {
    if (env.layout_file.empty()) throw ConfigError("env.layout_file is required for " + env.name);
    const Family fam = env.name == "lake-file" ? Family::kTabular : Family::kGridworld;
    spec = load_layout_file(env.layout_file, fam, env.max_steps > 0 ? env.max_steps : 100);
    spec.slip_prob = fam == Family::kTabular ? env.slip_prob : 0.0;
  } else {
    throw ConfigError("env.name: unknown environment '" + env.name + "'");
  }
  if (env.max_steps > 0) spec.max_steps = env.max_steps;
  spec.view_size = env.view_size;
  return spec;
}

ShapingSchedule TrainConfig::schedule() const {
  const double T = static_cast<double>(run.iterations);
  const auto frac = [T](double f) { return static_cast<std::int64_t>(std::llround(f * T)); };
  ShapingSchedule s;
  s.eta0 = shaping.eta0;
  s.xi = shaping.xi0;
  s.delta = shaping.delta;
  s.adv_floor = shaping.adv_floor;
  s.xi_hold = s.xi.size() > 1 ? std::max<std::int64_t>(1, frac(shaping.xi_hold_frac)) : 0;
  if (shaping.decay == "linear") {
    s.decay = DecayKind::kLinear;
    s.horizon = shaping.horizon > 0 ? shaping.horizon : run.iterations;
    s.eta_ramp = s.horizon;
  } else {
    s.decay = DecayKind::kExponential;
    s.eta_ramp = frac(shaping.eta_ramp_frac);
    s.horizon = std::max<std::int64_t>(1, shaping.horizon > 0 ? shaping.horizon : run.iterations);
    s.rate = shaping.rate > 0.0 ? shaping.rate
                                : std::pow(0.5, 1.0 / std::max(1e-9, shaping.half_life_frac * T));
  }
  return s;
}

GraphParams TrainConfig::graph_params() const {
  GraphParams p;
  p.prune_window = memgraph.prune_window;
  p.confidence_bump = memgraph.confidence_bump;
  p.max_per_key = memgraph.max_per_key;
  return p;
}

AlignmentMode TrainConfig::alignment() const {
  return shaping.alignment == "target" ? AlignmentMode::kTargetGoalVsNode : AlignmentMode::kPhaseVsNode;
}

}  // namespace mira
