#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cmath>

#include "mira/config.hpp"
#include "mira/shaping.hpp"
#include "mira/trainer.hpp"
#include "mira/utility.hpp"

namespace py = pybind11;
using namespace mira;

namespace {

TrainConfig make_config(const std::string& text, const std::vector<std::string>& overrides) {
  TrainConfig cfg = parse_config(text);
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

py::dict row_dict(const MetricsRow& r) {
  py::dict d;
  d["iteration"] = r.iteration;
  d["env_steps"] = r.env_steps;
  d["mean_return"] = r.mean_return;
  d["success_rate"] = r.success_rate;
  d["mean_abs_adv"] = r.mean_abs_adv;
  d["mean_utility"] = r.mean_utility;
  d["eta"] = r.eta;
  d["xi"] = r.xi;
  d["delta"] = r.delta;
  d["graph_size"] = r.graph_size;
  d["online_queries_used"] = r.online_queries_used;
  d["clip_fraction"] = r.clip_fraction;
  d["approx_kl"] = r.approx_kl;
  return d;
}

MetricsRow row_from(const py::dict& d) {
  MetricsRow r;
  r.mean_return = d["mean_return"].cast<double>();
  if (d.contains("iteration")) r.iteration = d["iteration"].cast<std::int64_t>();
  return r;
}

SubgoalPhase phase_of(const std::string& s) { return tokenize_subgoal(s); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MIRA: PPO with memory-graph advantage shaping";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "config_text",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return config_to_text(make_config(text, overrides));
      },
      py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
      "Canonical config text after applying `section.key=value` overrides.");

  m.def("config_keys", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : config_keys()) out.emplace_back(k.name, k.help);
    return out;
  });

  m.def(
      "train",
      [](const std::string& text, const std::vector<std::string>& overrides, const std::string& run_dir) {
        const TrainConfig cfg = make_config(text, overrides);
        TrainOptions opts;
        opts.run_dir = run_dir;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(cfg, std::move(opts));
        }
        py::dict out;
        py::list rows;
        for (const auto& row : r.rows) rows.append(row_dict(row));
        out["rows"] = rows;
        py::list evals;
        for (const auto& e : r.evals) {
          py::dict d;
          d["iteration"] = e.iteration;
          d["mean_return"] = e.result.mean_return;
          d["success_rate"] = e.result.success_rate;
          evals.append(d);
        }
        out["evals"] = evals;
        out["graph_size"] = r.graph.size();
        out["online_queries"] = r.budget.online_used;
        out["offline_queries"] = r.budget.offline_used;
        return out;
      },
      py::arg("text"), py::arg("overrides") = std::vector<std::string>{}, py::arg("run_dir") = "",
      "Train from config text; returns per-iteration metrics and evaluations.");

  m.def(
      "read_metrics",
      [](const std::string& path) {
        py::list rows;
        for (const auto& r : read_metrics_csv(path)) rows.append(row_dict(r));
        return rows;
      },
      py::arg("path"));

  m.def(
      "final_return",
      [](const py::list& rows, double frac) {
        std::vector<MetricsRow> v;
        for (const auto& r : rows) v.push_back(row_from(r.cast<py::dict>()));
        return final_return(v, frac);
      },
      py::arg("rows"), py::arg("frac") = 0.1);

  m.def(
      "schedule",
      [](const std::string& text, const std::vector<std::string>& overrides, std::int64_t k) {
        const ScheduleValue v = schedule_at(make_config(text, overrides).schedule(), k);
        return std::make_pair(v.eta, v.xi);
      },
      py::arg("text"), py::arg("overrides") = std::vector<std::string>{}, py::arg("k") = 0,
      "(eta, xi) at iteration k for the config's shaping schedule.");

  m.def(
      "shaped_advantage",
      [](const std::vector<double>& a, const std::vector<double>& u, double eta, double xi, double adv_floor) {
        if (!(eta > 0.0 && eta <= 1.0) || !(xi >= 0.0) || xi >= eta) throw ConfigError("need 0 <= xi < eta <= 1");
        ShapingSchedule s;
        s.eta0 = eta;
        s.xi = {xi};
        s.delta = std::nextafter(xi / s.eta0, 1.0);
        s.eta_ramp = 1;
        s.adv_floor = adv_floor;
        return shaped_advantage(a, u, s, 0).shaped;
      },
      py::arg("advantages"), py::arg("utilities"), py::arg("eta"), py::arg("xi"), py::arg("adv_floor") = 0.05,
      "eta * A + xi * max(mean|A|, adv_floor) * U for fixed weights.");

  m.def(
      "gae",
      [](const std::vector<double>& r, const std::vector<double>& v, double gamma, double lambda) {
        return gae(r, v, gamma, lambda);
      },
      py::arg("rewards"), py::arg("values"), py::arg("gamma") = 0.99, py::arg("lam") = 0.95);

  m.def("tokenize_subgoal", [](const std::string& s) { return phase_of(s).str(); }, py::arg("description"));
  m.def(
      "goal_alignment",
      [](const std::string& a, const std::string& b) { return goal_alignment(phase_of(a), phase_of(b)); },
      py::arg("a"), py::arg("b"));
}
