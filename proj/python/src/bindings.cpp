#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "app/commands.hpp"
#include "app/config.hpp"
#include "polrank/error.hpp"
#include "polrank/extpolicy.hpp"
#include "polrank/pruning.hpp"
#include "polrank/spectrum.hpp"

namespace py = pybind11;
using namespace polrank;

namespace {

using Counts = std::tuple<std::uint64_t, std::uint64_t, std::uint64_t, std::uint64_t>;
using Rows = std::vector<std::tuple<std::string, double, std::size_t>>;

Rows rows_of(const Ranking& r) {
  Rows out;
  for (const auto& e : r.entries) out.emplace_back(e.key.value, e.score, e.rank);
  return out;
}

std::optional<double> opt(const std::optional<double>& v) { return v; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "State importance rankings from mutated policy executions";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<UnsupportedEnvironment>(m, "UnsupportedEnvironment");
  py::register_exception<ContractViolation>(m, "ContractViolation");

  m.def(
      "score",
      [](const std::string& measure, std::uint64_t ep, std::uint64_t ef, std::uint64_t np, std::uint64_t nf,
         const std::string& key, std::uint64_t seed) {
        return score(measure_from_label(measure, seed), {ep, ef, np, nf}, AbstractStateKey(key));
      },
      py::arg("measure"), py::arg("ep"), py::arg("ef"), py::arg("np"), py::arg("nf"), py::arg("key") = "",
      py::arg("seed") = 0);

  m.def(
      "rank",
      [](const std::map<std::string, Counts>& counts, const std::string& measure, const std::string& role,
         std::uint64_t seed) {
        CounterMap counters;
        std::set<AbstractStateKey> keys;
        for (const auto& [k, c] : counts) {
          const auto& [ep, ef, np, nf] = c;
          counters[AbstractStateKey(k)] = {ep, ef, np, nf};
          keys.insert(AbstractStateKey(k));
        }
        return rows_of(rank(counters, measure_from_label(measure, seed), keys, executed_role_from_string(role)));
      },
      py::arg("counters"), py::arg("measure") = "ochiai", py::arg("role") = "mutated", py::arg("seed") = 0,
      "Rank states given {key: (ep, ef, np, nf)}. Returns (key, score, rank) rows.");

  m.def("retained_count", &retained_count, py::arg("r"), py::arg("n"));

  m.def("reset_message", &reset_message, py::arg("seed"));
  m.def(
      "act_message",
      [](const std::vector<double>& obs, bool discrete) {
        if (!discrete) return act_message(Observation::real(obs));
        std::vector<int> ints(obs.begin(), obs.end());
        return act_message(Observation::discrete(ints));
      },
      py::arg("obs"), py::arg("discrete") = false);

  m.def(
      "run_rank",
      [](const std::string& config_path, const std::vector<std::string>& overrides, int workers) {
        const auto config = app::load_config(config_path, overrides);
        app::RankResult r;
        {
          py::gil_scoped_release release;
          r = app::run_rank(config, workers);
        }
        py::dict out;
        py::dict counters;
        for (const auto& [k, c] : r.counters) counters[py::str(k.value)] = py::make_tuple(c.ep, c.ef, c.np, c.nf);
        py::dict rankings;
        for (const auto& rk : r.rankings) rankings[py::str(rk.measure.label())] = rows_of(rk);
        out["pass_rate"] = r.balance.pass_rate;
        out["counters"] = counters;
        out["rankings"] = rankings;
        return out;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("workers") = 1);

  m.def(
      "run_sweep",
      [](const std::string& config_path, const std::vector<std::string>& overrides, int workers) {
        const auto config = app::load_config(config_path, overrides);
        app::SweepOutcome s;
        {
          py::gil_scoped_release release;
          const auto r = app::run_rank(config, workers);
          s = app::run_sweep(config, r.rankings, workers);
        }
        py::list thresholds;
        for (const auto& t : s.thresholds) {
          py::dict row;
          row["measure"] = t.measure;
          row["threshold_pct"] = t.threshold_pct;
          row["min_states_pct"] = opt(t.summary.min_states_pct);
          row["min_steps_pct"] = opt(t.summary.min_steps_pct);
          thresholds.append(row);
        }
        py::dict out;
        out["original_mean"] = s.original_mean;
        out["random_mean"] = s.random_mean;
        out["thresholds"] = thresholds;
        return out;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("workers") = 1);
}
