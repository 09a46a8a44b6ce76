#include "app/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "polrank/environments.hpp"
#include "polrank/error.hpp"
#include "polrank/rng.hpp"

namespace polrank::app {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string out_dir(const RunConfig& config, const CommandOptions& options) {
  const std::string dir = options.out_dir.empty() ? config.output_dir : options.out_dir;
  fs::create_directories(dir);
  return dir;
}

std::string ranking_path(const std::string& dir, const CommandOptions& options) {
  return options.ranking_path.empty() ? (fs::path(dir) / "ranking.csv").string() : options.ranking_path;
}

std::string metadata_path(const std::string& dir, const CommandOptions& options) {
  if (!options.metadata_path.empty()) return options.metadata_path;
  if (!options.ranking_path.empty()) return (fs::path(options.ranking_path).parent_path() / "suite_meta.json").string();
  return (fs::path(dir) / "suite_meta.json").string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return json::parse(in);
}

RankingTable read_rankings(const std::string& path, std::uint64_t rand_seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_ranking_csv(in, rand_seed);
}

const Ranking& find_ranking(const std::vector<Ranking>& rankings, const std::string& label) {
  for (const auto& r : rankings) {
    if (r.measure.label() == label) return r;
  }
  throw ConfigError("measure '" + label + "' is not in the ranking");
}

// Loads the ranking and refuses it when it was computed for another
// environment or abstraction.
RankingTable load_compatible_ranking(const RunConfig& config, const std::string& dir, const CommandOptions& options) {
  const json meta = read_json(metadata_path(dir, options));
  if (!meta.contains("identity") || meta["identity"] != ranking_identity(config)) {
    throw ConfigError("ranking was produced for " + meta.value("identity", json()).dump() +
                      " but the config describes " + ranking_identity(config).dump());
  }
  return read_rankings(ranking_path(dir, options), rand_measure_seed(config));
}

EvalSettings eval_settings(const RunConfig& config, int workers) {
  EvalSettings s;
  s.n_test = config.eval.n_test;
  s.seed = config.eval.seed;
  s.horizon = config.horizon;
  s.workers = workers;
  return s;
}

std::string format_pct(std::optional<double> v) {
  if (!v) return "x";
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << *v;
  return os.str();
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  m.n = xs.size();
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

std::string format_mean_std(const std::vector<double>& xs, std::size_t total) {
  if (xs.empty()) return "x";
  const MeanStd m = mean_std(xs);
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << m.mean << " +- " << m.std;
  if (m.n != total) os << " (" << m.n << "/" << total << ")";
  return os.str();
}

}  // namespace

std::uint64_t rand_measure_seed(const RunConfig& config) {
  return derive_seed(config.mutation.master_seed, "rand-measure", 0);
}

RankResult run_rank(const RunConfig& config, int workers) {
  const auto make_env = make_env_factory(config.env);
  const auto policy = make_policy(config.policy, make_env);
  RankResult r;
  r.suite = generate_test_suite(make_env, policy, config.mutation, config.horizon > 0 ? config.horizon : make_env()->default_horizon(), workers);
  r.counters = accumulate(r.suite);
  for (const auto& m : all_measures(rand_measure_seed(config))) r.rankings.push_back(rank(r.counters, m, r.suite.encountered, config.executed_role));
  r.balance = check_balance(r.suite);
  return r;
}

SweepOutcome run_sweep(const RunConfig& config, const std::vector<Ranking>& rankings, int workers) {
  const auto make_env = make_env_factory(config.env);
  const auto policy = make_policy(config.policy, make_env);
  const EvalSettings settings = eval_settings(config, workers);

  SweepOutcome out;
  out.original_mean = evaluate_policy(make_env, policy, settings);
  out.random_mean = config.eval.baseline == Baseline::kZero ? 0.0 : evaluate_random(make_env, settings);
  if (out.original_mean == out.random_mean) {
    throw UndefinedNormalization("original policy scores " + std::to_string(out.original_mean) +
                                 ", the same as the baseline; normalization is undefined");
  }

  std::vector<SweepResult> sbfl;
  for (const auto& ranking : rankings) {
    out.sweeps.push_back(sweep(make_env, policy, ranking, config.eval.r_grid, config.mutation.default_action,
                               config.eval.unseen_state_rule, config.mutation.abstraction, settings,
                               out.original_mean, out.random_mean));
    if (ranking.measure.is_sbfl()) sbfl.push_back(out.sweeps.back());
  }
  for (double t : config.eval.thresholds) {
    for (const auto& s : out.sweeps) out.thresholds.push_back(ThresholdRow{s.measure, t, threshold_summary(s, t)});
    if (!sbfl.empty()) out.thresholds.push_back(ThresholdRow{"portfolio", t, portfolio_threshold_summary(sbfl, t)});
  }
  if (!sbfl.empty()) out.sweeps.push_back(portfolio_curve(sbfl));
  return out;
}

void print_threshold_table(std::ostream& out, const std::vector<ThresholdRow>& rows) {
  std::vector<double> thresholds;
  std::vector<std::string> measures;
  for (const auto& r : rows) {
    if (std::find(thresholds.begin(), thresholds.end(), r.threshold_pct) == thresholds.end()) thresholds.push_back(r.threshold_pct);
    if (std::find(measures.begin(), measures.end(), r.measure) == measures.end()) measures.push_back(r.measure);
  }
  out << std::left << std::setw(12) << "measure";
  for (double t : thresholds) {
    out << std::setw(12) << ("states%@" + format_fixed(t, 0)) << std::setw(12) << ("steps%@" + format_fixed(t, 0));
  }
  out << '\n';
  for (const auto& m : measures) {
    out << std::setw(12) << m;
    for (double t : thresholds) {
      for (const auto& r : rows) {
        if (r.measure == m && r.threshold_pct == t) {
          out << std::setw(12) << format_pct(r.summary.min_states_pct) << std::setw(12)
              << format_pct(r.summary.min_steps_pct);
        }
      }
    }
    out << '\n';
  }
  out << "(x: threshold never reached)\n" << std::right;
}

void write_threshold_csv(std::ostream& out, const std::vector<ThresholdRow>& rows) {
  out << "measure,threshold_pct,min_states_pct,min_steps_pct\n";
  for (const auto& r : rows) {
    out << r.measure << ',' << format_shortest(r.threshold_pct) << ','
        << (r.summary.min_states_pct ? format_fixed(*r.summary.min_states_pct, 6) : "x") << ','
        << (r.summary.min_steps_pct ? format_fixed(*r.summary.min_steps_pct, 6) : "x") << '\n';
  }
}

int cmd_rank(const RunConfig& config, const CommandOptions& options, std::ostream& log) {
  const std::string dir = out_dir(config, options);
  const RankResult r = run_rank(config, options.workers);
  {
    auto out = open_out((fs::path(dir) / "ranking.csv").string());
    write_ranking_csv(out, r.counters, r.rankings);
  }
  json meta = suite_metadata(r.suite);
  meta["identity"] = ranking_identity(config);
  meta["rand_seed"] = rand_measure_seed(config);
  meta["executed_role"] = to_string(config.executed_role);
  {
    auto out = open_out((fs::path(dir) / "suite_meta.json").string());
    out << meta.dump(2) << '\n';
  }
  if (options.write_suite) {
    auto out = open_out((fs::path(dir) / "suite.jsonl").string());
    write_traces_jsonl(out, r.suite.traces);
  }
  log << "suite: " << r.suite.traces.size() << " executions, " << r.suite.encountered.size() << " abstract states, "
      << r.balance.message << '\n';
  if (!r.balance.balanced) log << "warning: unbalanced suite: " << r.balance.message << '\n';
  log << "wrote " << (fs::path(dir) / "ranking.csv").string() << '\n';
  return 0;
}

int cmd_sweep(const RunConfig& config, const CommandOptions& options, std::ostream& log) {
  const std::string dir = out_dir(config, options);
  const RankingTable table = load_compatible_ranking(config, dir, options);
  const SweepOutcome s = run_sweep(config, table.rankings, options.workers);
  {
    auto out = open_out((fs::path(dir) / "sweep.csv").string());
    write_sweep_csv(out, s.sweeps);
  }
  {
    auto out = open_out((fs::path(dir) / "thresholds.csv").string());
    write_threshold_csv(out, s.thresholds);
  }
  log << "original mean reward " << s.original_mean << ", baseline " << s.random_mean << " ("
      << to_string(config.eval.baseline) << ")\n";
  print_threshold_table(log, s.thresholds);
  return 0;
}

int cmd_report(const RunConfig& config, const CommandOptions& options, std::ostream& log) {
  const std::string dir = out_dir(config, options);
  const int repeats = config.eval.repeats;
  std::vector<std::vector<ThresholdRow>> per_repeat;
  auto runs = open_out((fs::path(dir) / "report_repeats.csv").string());
  runs << "repeat,master_seed,pass_rate,states,measure,threshold_pct,min_states_pct,min_steps_pct\n";
  for (int rep = 0; rep < repeats; ++rep) {
    RunConfig c = config;
    if (rep > 0) c.mutation.master_seed = derive_seed(config.mutation.master_seed, "repeat", static_cast<std::uint64_t>(rep));
    const RankResult r = run_rank(c, options.workers);
    const SweepOutcome s = run_sweep(c, r.rankings, options.workers);
    log << "repeat " << rep << ": pass rate " << r.balance.pass_rate << ", " << r.suite.encountered.size()
        << " states\n";
    for (const auto& row : s.thresholds) {
      runs << rep << ',' << c.mutation.master_seed << ',' << format_fixed(r.balance.pass_rate, 6) << ','
           << r.suite.encountered.size() << ',' << row.measure << ',' << format_shortest(row.threshold_pct) << ','
           << (row.summary.min_states_pct ? format_fixed(*row.summary.min_states_pct, 6) : "x") << ','
           << (row.summary.min_steps_pct ? format_fixed(*row.summary.min_steps_pct, 6) : "x") << '\n';
    }
    per_repeat.push_back(s.thresholds);
  }

  auto summary = open_out((fs::path(dir) / "report.csv").string());
  summary << "measure,threshold_pct,states_mean,states_std,states_reached,steps_mean,steps_std,steps_reached,repeats\n";
  log << std::left << std::setw(12) << "measure" << std::setw(11) << "threshold" << std::setw(24) << "states%"
      << "steps%\n";
  for (std::size_t i = 0; i < per_repeat.front().size(); ++i) {
    std::vector<double> states, steps;
    for (const auto& rows : per_repeat) {
      if (rows[i].summary.min_states_pct) states.push_back(*rows[i].summary.min_states_pct);
      if (rows[i].summary.min_steps_pct) steps.push_back(*rows[i].summary.min_steps_pct);
    }
    const auto& row = per_repeat.front()[i];
    const MeanStd ms = mean_std(states), mp = mean_std(steps);
    summary << row.measure << ',' << format_shortest(row.threshold_pct) << ','
            << (ms.n ? format_fixed(ms.mean, 6) : "x") << ',' << (ms.n ? format_fixed(ms.std, 6) : "x") << ',' << ms.n
            << ',' << (mp.n ? format_fixed(mp.mean, 6) : "x") << ',' << (mp.n ? format_fixed(mp.std, 6) : "x") << ','
            << mp.n << ',' << repeats << '\n';
    log << std::setw(12) << row.measure << std::setw(11) << format_shortest(row.threshold_pct) << std::setw(24)
        << format_mean_std(states, per_repeat.size()) << format_mean_std(steps, per_repeat.size()) << '\n';
  }
  log << std::right;
  return 0;
}

int cmd_heatmap(const RunConfig& config, const CommandOptions& options, std::ostream& log) {
  const std::string dir = out_dir(config, options);
  const RankingTable table = load_compatible_ranking(config, dir, options);
  const auto env = make_env_factory(config.env)();
  const Heatmap h = heatmap_export(find_ranking(table.rankings, options.measure), *env);
  const std::string path = (fs::path(dir) / ("heatmap_" + options.measure + ".json")).string();
  auto out = open_out(path);
  out << heatmap_to_json(h).dump() << '\n';
  log << "wrote " << path << '\n';
  return 0;
}

int cmd_agree(const RunConfig& config, const CommandOptions& options, std::ostream& log) {
  if (!config.agree.other) throw ConfigError("agree.policy: missing (the policy to compare against)");
  const std::string dir = out_dir(config, options);
  const RankingTable table = load_compatible_ranking(config, dir, options);
  const json meta = read_json(metadata_path(dir, options));
  const auto kind = observation_kind_from_string(meta.at("observation_kind").get<std::string>());
  std::map<AbstractStateKey, Observation> probes;
  for (const auto& entry : meta.at("representatives")) {
    probes.emplace(AbstractStateKey(entry.at(0).get<std::string>()), observation_from_json(entry.at(1), kind));
  }
  const auto make_env = make_env_factory(config.env);
  const auto a = make_policy(config.policy, make_env);
  const auto b = make_policy(*config.agree.other, make_env);
  const auto measure = config.agree.measure;
  const auto points = policy_agreement(find_ranking(table.rankings, measure), *a, *b, config.agree.fractions, probes);
  const std::string path = (fs::path(dir) / "agreement.csv").string();
  auto out = open_out(path);
  write_agreement_csv(out, points);
  for (const auto& p : points) {
    log << "top " << format_fixed(100.0 * p.fraction, 0) << "% (" << p.states << " states): "
        << format_fixed(p.agreement_pct, 1) << "% agreement\n";
  }
  return 0;
}

OracleCheckResult run_oracle_check(const RunConfig& config, int workers) {
  const auto make_env = make_env_factory(config.env);
  const auto policy = make_policy(config.policy, make_env);
  const auto prototype = make_env();
  const int horizon = config.horizon > 0 ? config.horizon : prototype->default_horizon();

  OracleSetup setup;
  setup.env = prototype.get();
  setup.policy = policy.get();
  setup.default_action = config.mutation.default_action;
  setup.condition = config.mutation.condition;
  setup.abstraction = config.mutation.abstraction;
  setup.horizon = horizon;

  OracleCheckResult result;
  const std::vector<double> mus = config.oracle.mus.empty() ? std::vector<double>{config.mutation.mu} : config.oracle.mus;
  for (double mu : mus) {
    const auto expected = exact_expected_counters(setup, mu);
    MutationConfig mc = config.mutation;
    mc.mu = mu;
    mc.suite_size = config.oracle.episodes;
    const TestSuite suite = generate_test_suite(make_env, policy, mc, horizon, workers);
    const CounterMap observed = accumulate(suite);
    const auto n = static_cast<double>(suite.traces.size());

    for (const auto& [key, c] : observed) {
      if (!expected.contains(key)) result.problems.push_back("state " + key.value + " observed but unreachable per the oracle");
    }
    for (const auto& [key, e] : expected) {
      auto it = observed.find(key);
      const SpectrumCounters o = it == observed.end() ? SpectrumCounters{} : it->second;
      const std::pair<const char*, std::pair<double, std::uint64_t>> cells[] = {
          {"ep", {e.ep, o.ep}}, {"ef", {e.ef, o.ef}}, {"np", {e.np, o.np}}, {"nf", {e.nf, o.nf}}};
      for (const auto& [name, pair] : cells) {
        const auto [p, obs] = pair;
        OracleCheckRow row{mu, key, name, n * p, obs, 0.0, true};
        const double sd = std::sqrt(n * p * (1.0 - p));
        const double diff = static_cast<double>(obs) - n * p;
        if (sd < 1e-9) {
          row.ok = std::abs(diff) < 1e-6 * std::max(1.0, n);
        } else {
          row.z = diff / sd;
          row.ok = std::abs(row.z) <= config.oracle.sigmas;
        }
        if (!row.ok) {
          std::ostringstream os;
          os << "mu " << mu << ", state " << key.value << ", a_" << name << ": observed " << obs << ", expected "
             << n * p << " (z " << row.z << ")";
          result.problems.push_back(os.str());
        }
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

int cmd_oracle_check(const RunConfig& config, const CommandOptions& options, std::ostream& log) {
  const std::string dir = out_dir(config, options);
  const OracleCheckResult result = run_oracle_check(config, options.workers);

  {
    const auto make_env = make_env_factory(config.env);
    const auto policy = make_policy(config.policy, make_env);
    const auto prototype = make_env();
    OracleSetup setup;
    setup.env = prototype.get();
    setup.policy = policy.get();
    setup.default_action = config.mutation.default_action;
    setup.condition = config.mutation.condition;
    setup.abstraction = config.mutation.abstraction;
    setup.horizon = config.horizon;
    auto out = open_out((fs::path(dir) / "oracle.csv").string());
    write_oracle_csv(out, exact_expected_counters(setup, config.mutation.mu), exact_single_state_importance(setup));
  }
  {
    auto out = open_out((fs::path(dir) / "oracle_check.csv").string());
    out << "mu,abstract_state,counter,expected,observed,z,ok\n";
    for (const auto& r : result.rows) {
      out << format_shortest(r.mu) << ',' << csv_escape(r.key.value) << ',' << r.counter << ','
          << format_fixed(r.expected, 6) << ',' << r.observed << ',' << format_fixed(r.z, 6) << ','
          << (r.ok ? "true" : "false") << '\n';
    }
  }
  for (const auto& p : result.problems) log << "  " << p << '\n';
  log << (result.passed() ? "PASS" : "FAIL") << ": " << result.rows.size() << " counters checked within "
      << config.oracle.sigmas << " sigma\n";
  return result.passed() ? 0 : 1;
}

}  // namespace polrank::app
