#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "polrank/abstraction.hpp"
#include "polrank/core.hpp"
#include "polrank/mutation.hpp"
#include "polrank/policies.hpp"
#include "polrank/spectrum.hpp"

namespace polrank {

enum class UnseenStateRule { kUseDefault, kUsePolicy };

std::string to_string(UnseenStateRule rule);
UnseenStateRule unseen_rule_from_string(const std::string& s);

// round(r * n) with halves rounded up.
std::size_t retained_count(double r, std::size_t n);

/// The policy that follows `base` in the top-r ranked states and takes the
/// default action elsewhere.
class PrunedPolicy {
 public:
  PrunedPolicy(PolicyHandle base, const Ranking& ranking, double restore_fraction, DefaultActionKind default_action,
               UnseenStateRule unseen_rule = UnseenStateRule::kUseDefault);

  Policy& base() const { return *base_; }
  const PolicyHandle& base_handle() const { return base_; }
  double restore_fraction() const { return r_; }
  const std::set<AbstractStateKey>& retained() const { return retained_; }
  const std::set<AbstractStateKey>& ranked() const { return ranked_; }
  DefaultActionKind default_action() const { return default_action_; }
  UnseenStateRule unseen_rule() const { return unseen_rule_; }
  std::size_t ranking_size() const { return ranked_.size(); }

 private:
  PolicyHandle base_;
  double r_;
  std::set<AbstractStateKey> retained_;
  std::set<AbstractStateKey> ranked_;
  DefaultActionKind default_action_;
  UnseenStateRule unseen_rule_;
};

struct PrunedDecision {
  ActionId action = 0;
  bool used_policy = false;
};

PrunedDecision pruned_act(const PrunedPolicy& p, const Observation& obs, const AbstractStateKey& key,
                          std::span<const ActionId> history, EpisodeMutationMemo& memo, RngStream& rng);

struct EvalSettings {
  std::size_t n_test = 100;
  std::uint64_t seed = 0;
  int horizon = 0;  // 0 selects the environment default
  int workers = 1;
};

// Seed handed to env.reset for evaluation episode i. Uses a label disjoint
// from the suite's, so evaluation never replays suite episodes.
std::uint64_t eval_episode_seed(std::uint64_t seed, std::size_t episode);

struct PrunedEvaluation {
  double mean_reward = 0.0;
  double steps_using_pi_pct = 0.0;
  std::vector<double> episode_rewards;
  std::uint64_t total_steps = 0;
  std::uint64_t policy_steps = 0;
};

PrunedEvaluation evaluate_pruned(const EnvironmentFactory& make_env, const PrunedPolicy& p,
                                 const AbstractionSpec& abstraction, const EvalSettings& settings);

// Mean total reward of the unpruned policy over the evaluation episodes.
double evaluate_policy(const EnvironmentFactory& make_env, const PolicyHandle& policy, const EvalSettings& settings);
// Mean total reward of uniformly random actions over the evaluation episodes.
double evaluate_random(const EnvironmentFactory& make_env, const EvalSettings& settings);

/// 100 * (pruned - random) / (original - random). Throws
/// UndefinedNormalization when original == random.
double normalize_score(double pruned, double random_baseline, double original);

struct SweepPoint {
  double r = 0.0;
  double states_pct = 0.0;
  double steps_using_pi_pct = 0.0;
  double mean_reward = 0.0;
  double normalized_pct = 0.0;
  bool operator==(const SweepPoint&) const = default;
};

struct SweepResult {
  std::string measure;
  std::vector<SweepPoint> points;
  double original_mean = 0.0;
  double random_mean = 0.0;
  bool operator==(const SweepResult&) const = default;
};

enum class Axis { kStates, kSteps };

// 0.0, 0.05, 0.1, 0.2, ..., 1.0
std::vector<double> default_r_grid();

/// Evaluates the pruned policy at each r of `r_grid` (strictly increasing).
/// Normalization uses `random_baseline` as the floor.
SweepResult sweep(const EnvironmentFactory& make_env, const PolicyHandle& base, const Ranking& ranking,
                  std::span<const double> r_grid, DefaultActionKind default_action, UnseenStateRule unseen_rule,
                  const AbstractionSpec& abstraction, const EvalSettings& settings, double original_mean,
                  double random_baseline);

// Running maximum of a performance sequence.
std::vector<double> running_max(std::span<const double> values);

/// Points sorted by the chosen axis (ties keep r order) with normalized_pct
/// replaced by the best value at that x or less.
SweepResult monotone_envelope(const SweepResult& sweep, Axis axis);

/// Pointwise maximum of normalized_pct over sweeps sharing one r grid. The
/// steps value of each point is taken from the measure that attains the max.
/// Throws ConfigError on mismatched grids or an empty input.
SweepResult portfolio_curve(std::span<const SweepResult> sweeps);

struct ThresholdSummary {
  std::optional<double> min_states_pct;  // nullopt: never reached
  std::optional<double> min_steps_pct;
};

/// Smallest x on each axis where the enveloped normalized performance
/// reaches threshold_pct.
ThresholdSummary threshold_summary(const SweepResult& sweep, double threshold_pct);

/// Portfolio thresholds: the states axis comes from portfolio_curve; the
/// steps axis is the best constituent, since every constituent point is an
/// achievable pruned policy.
ThresholdSummary portfolio_threshold_summary(std::span<const SweepResult> sbfl_sweeps, double threshold_pct);

struct AgreementPoint {
  double fraction = 0.0;
  double agreement_pct = 0.0;
  std::size_t states = 0;
};

/// For each fraction X, the share of the top-X ranked states (at least one)
/// where both policies choose the same action on the state's representative
/// observation. Ranked states without a representative are skipped.
std::vector<AgreementPoint> policy_agreement(const Ranking& ranking, Policy& a, Policy& b,
                                             std::span<const double> fractions,
                                             const std::map<AbstractStateKey, Observation>& probes);

/// Scores projected onto (x, y, direction) of the grid-crossing world.
struct Heatmap {
  int width = 7;
  int height = 7;
  int directions = 4;
  std::string measure;
  std::vector<std::optional<double>> cells;  // index (y * width + x) * directions + dir

  std::optional<double>& at(int x, int y, int dir) { return cells.at((y * width + x) * directions + dir); }
  const std::optional<double>& at(int x, int y, int dir) const {
    return cells.at((y * width + x) * directions + dir);
  }
  bool operator==(const Heatmap&) const = default;
};

/// Throws UnsupportedEnvironment unless `env` is the grid-crossing world.
/// States sharing (x, y, direction) across layouts keep the highest score.
Heatmap heatmap_export(const Ranking& ranking, const Environment& env);
nlohmann::json heatmap_to_json(const Heatmap& h);
Heatmap heatmap_from_json(const nlohmann::json& j);

// CSV writers.
void write_sweep_csv(std::ostream& out, std::span<const SweepResult> sweeps);
void write_agreement_csv(std::ostream& out, std::span<const AgreementPoint> points);

}  // namespace polrank
