#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polrank/core.hpp"
#include "polrank/mutation.hpp"
#include "polrank/policies.hpp"
#include "polrank/pruning.hpp"
#include "polrank/spectrum.hpp"

namespace polrank::app {

struct EnvConfig {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

// name is one of: constant, scripted_grid, scripted_cartpole, tabular,
// q_learning, external.
struct PolicyConfig {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

enum class Baseline { kZero, kRandom };

struct EvalConfig {
  std::size_t n_test = 100;
  std::vector<double> r_grid = default_r_grid();
  UnseenStateRule unseen_state_rule = UnseenStateRule::kUseDefault;
  int repeats = 3;
  std::uint64_t seed = 0;
  // zero: normalize against a reward floor of 0; random: against a uniformly
  // random policy evaluated on the same seeds.
  Baseline baseline = Baseline::kZero;
  std::vector<double> thresholds = {50.0, 90.0};
};

struct AgreeConfig {
  std::optional<PolicyConfig> other;
  std::string measure = "ochiai";
  std::vector<double> fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
};

struct OracleCheckConfig {
  std::vector<double> mus;  // empty: the mutation rate of the run
  std::size_t episodes = 50000;
  double sigmas = 3.0;
};

struct RunConfig {
  EnvConfig env;
  PolicyConfig policy;
  MutationConfig mutation;
  int horizon = 0;  // 0 selects the environment default
  ExecutedRole executed_role = ExecutedRole::kMutated;
  EvalConfig eval;
  AgreeConfig agree;
  OracleCheckConfig oracle;
  std::string output_dir = "out";
  nlohmann::json source;  // the merged JSON this config was parsed from
};

/// Applies "dotted.path=value" to a JSON object. The value is parsed as JSON
/// when possible and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

EnvironmentFactory make_env_factory(const EnvConfig& env);
PolicyHandle make_policy(const PolicyConfig& policy, const EnvironmentFactory& make_env);

// The JSON identifying what a ranking was computed on; sweeps refuse rankings
// whose identity differs from the config's.
nlohmann::json ranking_identity(const RunConfig& config);

std::string to_string(Baseline b);

}  // namespace polrank::app
