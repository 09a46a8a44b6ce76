#include "polrank/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "polrank/environments.hpp"
#include "polrank/error.hpp"
#include "polrank/parallel.hpp"

namespace polrank {

using nlohmann::json;

std::string to_string(UnseenStateRule rule) {
  return rule == UnseenStateRule::kUseDefault ? "use_default" : "use_policy";
}

UnseenStateRule unseen_rule_from_string(const std::string& s) {
  if (s == "use_default") return UnseenStateRule::kUseDefault;
  if (s == "use_policy") return UnseenStateRule::kUsePolicy;
  throw ConfigError("unknown unseen-state rule '" + s + "' (expected use_default or use_policy)");
}

std::size_t retained_count(double r, std::size_t n) {
  if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("restore fraction must lie in [0, 1]");
  // The epsilon absorbs representation error in products such as 0.35 * 20.
  const double x = std::floor(r * static_cast<double>(n) + 0.5 + 1e-9);
  return std::min(n, static_cast<std::size_t>(x));
}

PrunedPolicy::PrunedPolicy(PolicyHandle base, const Ranking& ranking, double restore_fraction,
                           DefaultActionKind default_action, UnseenStateRule unseen_rule)
    : base_(std::move(base)), r_(restore_fraction), default_action_(default_action), unseen_rule_(unseen_rule) {
  if (!base_) throw ContractViolation("pruned policy needs a base policy");
  retained_ = ranking.top(retained_count(restore_fraction, ranking.size()));
  for (const auto& e : ranking.entries) ranked_.insert(e.key);
}

PrunedDecision pruned_act(const PrunedPolicy& p, const Observation& obs, const AbstractStateKey& key,
                          std::span<const ActionId> history, EpisodeMutationMemo& memo, RngStream& rng) {
  bool use_policy;
  if (p.retained().contains(key)) {
    use_policy = true;
  } else if (p.ranked().contains(key)) {
    use_policy = false;
  } else {
    use_policy = p.unseen_rule() == UnseenStateRule::kUsePolicy;
  }
  if (use_policy) return PrunedDecision{p.base().act(obs), true};

  std::optional<ActionId> policy_action;
  if (p.default_action() == DefaultActionKind::kRepeatPrevious && history.empty()) policy_action = p.base().act(obs);
  return PrunedDecision{default_action(p.default_action(), history, policy_action, key, memo, rng,
                                       p.base().action_count()),
                        false};
}

namespace {

class PrunedController : public Controller {
 public:
  PrunedController(const PrunedPolicy& p, const AbstractionSpec& abstraction, std::uint64_t seed, std::size_t episode)
      : p_(p), abstraction_(abstraction), rng_(seed, "pruned-default", episode) {}

  void begin_episode(std::uint64_t seed) override { p_.base().begin_episode(seed); }

  Decision decide(const Observation& obs, std::span<const ActionId> history) override {
    AbstractStateKey key = abstract(abstraction_, obs);
    const PrunedDecision d = pruned_act(p_, obs, key, history, memo_, rng_);
    return Decision{d.action, !d.used_policy, std::nullopt};
  }

 private:
  const PrunedPolicy& p_;
  const AbstractionSpec& abstraction_;
  EpisodeMutationMemo memo_;
  RngStream rng_;
};

class RandomController : public Controller {
 public:
  RandomController(int action_count, std::uint64_t seed, std::size_t episode)
      : action_count_(action_count), rng_(seed, "random-baseline", episode) {}
  Decision decide(const Observation&, std::span<const ActionId>) override {
    return Decision{static_cast<ActionId>(rng_.uniform_int(static_cast<std::uint64_t>(action_count_))), false,
                    std::nullopt};
  }

 private:
  int action_count_;
  RngStream rng_;
};

struct EpisodeStats {
  double reward = 0.0;
  std::uint64_t steps = 0;
  std::uint64_t policy_steps = 0;
};

template <class MakeController>
std::vector<EpisodeStats> run_eval(const EnvironmentFactory& make_env, const EvalSettings& s, int workers,
                                   MakeController make_controller) {
  if (s.n_test < 1) throw ConfigError("eval.n_test: must be at least 1");
  std::vector<EpisodeStats> stats(s.n_test);
  parallel_for(s.n_test, workers, [&](std::size_t i) {
    auto env = make_env();
    auto controller = make_controller(*env, i);
    const int horizon = s.horizon > 0 ? s.horizon : env->default_horizon();
    const ExecutionTrace t = run_episode(*env, *controller, eval_episode_seed(s.seed, i), horizon);
    EpisodeStats& st = stats[i];
    st.reward = t.total_reward;
    st.steps = t.actions.size();
    st.policy_steps = static_cast<std::uint64_t>(std::count(t.mutated_flags.begin(), t.mutated_flags.end(), false));
  });
  return stats;
}

double mean_reward(const std::vector<EpisodeStats>& stats) {
  double sum = 0.0;
  for (const auto& s : stats) sum += s.reward;
  return sum / static_cast<double>(stats.size());
}

}  // namespace

std::uint64_t eval_episode_seed(std::uint64_t seed, std::size_t episode) {
  return derive_seed(seed, "eval-episode", episode);
}

PrunedEvaluation evaluate_pruned(const EnvironmentFactory& make_env, const PrunedPolicy& p,
                                 const AbstractionSpec& abstraction, const EvalSettings& settings) {
  const int workers = p.base().shareable() ? settings.workers : 1;
  const auto stats = run_eval(make_env, settings, workers, [&](Environment&, std::size_t i) {
    return std::make_unique<PrunedController>(p, abstraction, settings.seed, i);
  });
  PrunedEvaluation ev;
  ev.mean_reward = mean_reward(stats);
  for (const auto& s : stats) {
    ev.episode_rewards.push_back(s.reward);
    ev.total_steps += s.steps;
    ev.policy_steps += s.policy_steps;
  }
  ev.steps_using_pi_pct =
      ev.total_steps == 0 ? 0.0 : 100.0 * static_cast<double>(ev.policy_steps) / static_cast<double>(ev.total_steps);
  return ev;
}

double evaluate_policy(const EnvironmentFactory& make_env, const PolicyHandle& policy, const EvalSettings& settings) {
  const int workers = policy->shareable() ? settings.workers : 1;
  return mean_reward(run_eval(make_env, settings, workers, [&](Environment&, std::size_t) {
    return std::make_unique<PolicyController>(*policy);
  }));
}

double evaluate_random(const EnvironmentFactory& make_env, const EvalSettings& settings) {
  return mean_reward(run_eval(make_env, settings, settings.workers, [&](Environment& env, std::size_t i) {
    return std::make_unique<RandomController>(env.action_count(), settings.seed, i);
  }));
}

double normalize_score(double pruned, double random_baseline, double original) {
  if (original == random_baseline) {
    throw UndefinedNormalization("normalization undefined: original score equals the random baseline");
  }
  return 100.0 * (pruned - random_baseline) / (original - random_baseline);
}

std::vector<double> default_r_grid() {
  return {0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
}

SweepResult sweep(const EnvironmentFactory& make_env, const PolicyHandle& base, const Ranking& ranking,
                  std::span<const double> r_grid, DefaultActionKind default_action, UnseenStateRule unseen_rule,
                  const AbstractionSpec& abstraction, const EvalSettings& settings, double original_mean,
                  double random_baseline) {
  for (std::size_t i = 1; i < r_grid.size(); ++i) {
    if (!(r_grid[i] > r_grid[i - 1])) throw ConfigError("eval.r_grid: must be strictly increasing");
  }
  SweepResult result;
  result.measure = ranking.measure.label();
  result.original_mean = original_mean;
  result.random_mean = random_baseline;
  for (double r : r_grid) {
    PrunedPolicy p(base, ranking, r, default_action, unseen_rule);
    const PrunedEvaluation ev = evaluate_pruned(make_env, p, abstraction, settings);
    SweepPoint pt;
    pt.r = r;
    pt.states_pct = ranking.size() == 0 ? 0.0
                                        : 100.0 * static_cast<double>(p.retained().size()) /
                                              static_cast<double>(ranking.size());
    pt.steps_using_pi_pct = ev.steps_using_pi_pct;
    pt.mean_reward = ev.mean_reward;
    pt.normalized_pct = normalize_score(ev.mean_reward, random_baseline, original_mean);
    result.points.push_back(pt);
  }
  return result;
}

std::vector<double> running_max(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  for (std::size_t i = 1; i < out.size(); ++i) out[i] = std::max(out[i], out[i - 1]);
  return out;
}

SweepResult monotone_envelope(const SweepResult& sweep, Axis axis) {
  SweepResult out = sweep;
  auto x = [axis](const SweepPoint& p) { return axis == Axis::kStates ? p.states_pct : p.steps_using_pi_pct; };
  std::stable_sort(out.points.begin(), out.points.end(),
                   [&](const SweepPoint& a, const SweepPoint& b) { return x(a) < x(b); });
  std::vector<double> perf;
  for (const auto& p : out.points) perf.push_back(p.normalized_pct);
  perf = running_max(perf);
  for (std::size_t i = 0; i < perf.size(); ++i) out.points[i].normalized_pct = perf[i];
  return out;
}

SweepResult portfolio_curve(std::span<const SweepResult> sweeps) {
  if (sweeps.empty()) throw ConfigError("portfolio needs at least one sweep");
  SweepResult out;
  out.measure = "portfolio";
  out.original_mean = sweeps[0].original_mean;
  out.random_mean = sweeps[0].random_mean;
  const std::size_t n = sweeps[0].points.size();
  for (const auto& s : sweeps) {
    if (s.points.size() != n) throw ConfigError("portfolio: sweeps have different r grids");
    for (std::size_t i = 0; i < n; ++i) {
      if (s.points[i].r != sweeps[0].points[i].r) throw ConfigError("portfolio: sweeps have different r grids");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const SweepPoint* best = &sweeps[0].points[i];
    for (const auto& s : sweeps) {
      if (s.points[i].normalized_pct > best->normalized_pct) best = &s.points[i];
    }
    out.points.push_back(*best);
  }
  return out;
}

namespace {

std::optional<double> first_crossing(const SweepResult& sweep, Axis axis, double threshold_pct) {
  const SweepResult env = monotone_envelope(sweep, axis);
  for (const auto& p : env.points) {
    if (p.normalized_pct >= threshold_pct - 1e-9) return axis == Axis::kStates ? p.states_pct : p.steps_using_pi_pct;
  }
  return std::nullopt;
}

std::optional<double> min_opt(std::optional<double> a, std::optional<double> b) {
  if (!a) return b;
  if (!b) return a;
  return std::min(*a, *b);
}

}  // namespace

ThresholdSummary threshold_summary(const SweepResult& sweep, double threshold_pct) {
  return ThresholdSummary{first_crossing(sweep, Axis::kStates, threshold_pct),
                          first_crossing(sweep, Axis::kSteps, threshold_pct)};
}

ThresholdSummary portfolio_threshold_summary(std::span<const SweepResult> sbfl_sweeps, double threshold_pct) {
  ThresholdSummary s;
  s.min_states_pct = first_crossing(portfolio_curve(sbfl_sweeps), Axis::kStates, threshold_pct);
  for (const auto& sw : sbfl_sweeps) s.min_steps_pct = min_opt(s.min_steps_pct, first_crossing(sw, Axis::kSteps, threshold_pct));
  return s;
}

std::vector<AgreementPoint> policy_agreement(const Ranking& ranking, Policy& a, Policy& b,
                                             std::span<const double> fractions,
                                             const std::map<AbstractStateKey, Observation>& probes) {
  std::vector<const Observation*> ordered;
  for (const auto& e : ranking.entries) {
    auto it = probes.find(e.key);
    if (it != probes.end()) ordered.push_back(&it->second);
  }
  std::vector<bool> agree;
  agree.reserve(ordered.size());
  for (const Observation* o : ordered) agree.push_back(a.act(*o) == b.act(*o));

  std::vector<AgreementPoint> out;
  for (double f : fractions) {
    AgreementPoint pt;
    pt.fraction = f;
    if (ordered.empty()) {
      out.push_back(pt);
      continue;
    }
    const std::size_t n = std::max<std::size_t>(1, retained_count(f, ordered.size()));
    pt.states = n;
    const auto hits = std::count(agree.begin(), agree.begin() + static_cast<std::ptrdiff_t>(n), true);
    pt.agreement_pct = 100.0 * static_cast<double>(hits) / static_cast<double>(n);
    out.push_back(pt);
  }
  return out;
}

Heatmap heatmap_export(const Ranking& ranking, const Environment& env) {
  if (env.name() != "grid-crossing") {
    throw UnsupportedEnvironment("heatmap export needs the grid-crossing environment, got " + env.name());
  }
  Heatmap h;
  h.measure = ranking.measure.label();
  h.cells.assign(static_cast<std::size_t>(h.width * h.height * h.directions), std::nullopt);
  for (const auto& e : ranking.entries) {
    const auto parts = csv_split(e.key.value);
    if (parts.size() != 5) throw UnsupportedEnvironment("heatmap: key '" + e.key.value + "' is not a grid state");
    const int x = std::stoi(parts[0]), y = std::stoi(parts[1]), d = std::stoi(parts[2]);
    if (std::isinf(e.score)) continue;
    auto& cell = h.at(x, y, d);
    if (!cell || e.score > *cell) cell = e.score;
  }
  return h;
}

json heatmap_to_json(const Heatmap& h) {
  json cells = json::array();
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      for (int d = 0; d < h.directions; ++d) {
        const auto& v = h.at(x, y, d);
        cells.push_back(json{{"x", x}, {"y", y}, {"dir", d}, {"score", v ? json(*v) : json(nullptr)}});
      }
    }
  }
  return json{{"width", h.width},
              {"height", h.height},
              {"directions", h.directions},
              {"measure", h.measure},
              {"cells", std::move(cells)}};
}

Heatmap heatmap_from_json(const json& j) {
  Heatmap h;
  h.width = j.at("width").get<int>();
  h.height = j.at("height").get<int>();
  h.directions = j.at("directions").get<int>();
  h.measure = j.at("measure").get<std::string>();
  h.cells.assign(static_cast<std::size_t>(h.width * h.height * h.directions), std::nullopt);
  for (const auto& c : j.at("cells")) {
    if (!c.at("score").is_null()) h.at(c.at("x").get<int>(), c.at("y").get<int>(), c.at("dir").get<int>()) = c.at("score").get<double>();
  }
  return h;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepResult> sweeps) {
  out << "measure,r,states_pct,steps_using_pi_pct,mean_reward,normalized_pct\n";
  for (const auto& s : sweeps) {
    for (const auto& p : s.points) {
      out << s.measure << ',' << format_fixed(p.r, 4) << ',' << format_fixed(p.states_pct, 4) << ','
          << format_fixed(p.steps_using_pi_pct, 4) << ',' << format_fixed(p.mean_reward, 6) << ','
          << format_fixed(p.normalized_pct, 4) << '\n';
    }
  }
}

void write_agreement_csv(std::ostream& out, std::span<const AgreementPoint> points) {
  out << "fraction,agreement_pct,states\n";
  for (const auto& p : points) {
    out << format_fixed(p.fraction, 4) << ',' << format_fixed(p.agreement_pct, 4) << ',' << p.states << '\n';
  }
}

}  // namespace polrank
