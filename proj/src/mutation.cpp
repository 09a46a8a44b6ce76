#include "polrank/mutation.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "polrank/error.hpp"
#include "polrank/parallel.hpp"

namespace polrank {

using nlohmann::json;

std::string to_string(DefaultActionKind kind) {
  return kind == DefaultActionKind::kRepeatPrevious ? "repeat_previous" : "random_memoized";
}

DefaultActionKind default_action_from_string(const std::string& s) {
  if (s == "repeat_previous") return DefaultActionKind::kRepeatPrevious;
  if (s == "random_memoized") return DefaultActionKind::kRandomMemoized;
  throw ConfigError("unknown default action '" + s + "' (expected repeat_previous or random_memoized)");
}

void validate(const MutationConfig& config) {
  if (config.suite_size < 1) throw ConfigError("mutation.suite_size: must be at least 1");
  if (!(config.mu >= 0.0 && config.mu <= 1.0)) throw ConfigError("mutation.mu: must lie in [0, 1]");
  validate(config.abstraction);
}

ActionId default_action(DefaultActionKind kind, std::span<const ActionId> history,
                        std::optional<ActionId> policy_action, const AbstractStateKey& key,
                        EpisodeMutationMemo& memo, RngStream& rng, int action_count) {
  if (action_count < 1) throw ContractViolation("default_action: action_count must be positive");
  if (kind == DefaultActionKind::kRepeatPrevious) {
    if (!history.empty()) return history.back();
    if (!policy_action) throw ContractViolation("default_action: step-0 fallback needs the policy action");
    return *policy_action;
  }
  auto it = memo.sampled_actions.find(key);
  if (it != memo.sampled_actions.end()) return it->second;
  const auto drawn = static_cast<ActionId>(rng.uniform_int(static_cast<std::uint64_t>(action_count)));
  memo.sampled_actions.emplace(key, drawn);
  return drawn;
}

MutantStep mutant_step_action(Policy& policy, const Observation& obs, const AbstractStateKey& key,
                              EpisodeMutationMemo& memo, double mu, RngStream& mutation_rng,
                              DefaultActionKind kind, std::span<const ActionId> history,
                              RngStream& default_rng) {
  auto it = memo.decided.find(key);
  if (it == memo.decided.end()) it = memo.decided.emplace(key, mutation_rng.uniform01() < mu).first;
  if (!it->second) return MutantStep{policy.act(obs), false};

  std::optional<ActionId> policy_action;
  if (kind == DefaultActionKind::kRepeatPrevious && history.empty()) policy_action = policy.act(obs);
  return MutantStep{default_action(kind, history, policy_action, key, memo, default_rng, policy.action_count()),
                    true};
}

MutantController::MutantController(Policy& policy, const MutationConfig& config, std::uint64_t episode_index)
    : policy_(policy),
      config_(config),
      mutation_rng_(config.master_seed, "mutation", episode_index),
      default_rng_(config.master_seed, "default-action", episode_index) {}

void MutantController::begin_episode(std::uint64_t seed) { policy_.begin_episode(seed); }

Decision MutantController::decide(const Observation& obs, std::span<const ActionId> history) {
  AbstractStateKey key = abstract(config_.abstraction, obs);
  const MutantStep step = mutant_step_action(policy_, obs, key, memo_, config_.mu, mutation_rng_,
                                             config_.default_action, history, default_rng_);
  return Decision{step.action, step.was_default, std::move(key)};
}

double TestSuite::pass_rate() const {
  if (traces.empty()) return 0.0;
  std::size_t passed = 0;
  for (const auto& t : traces) passed += t.passed.value_or(false) ? 1 : 0;
  return static_cast<double>(passed) / static_cast<double>(traces.size());
}

std::uint64_t suite_episode_seed(std::uint64_t master_seed, std::size_t episode) {
  return derive_seed(master_seed, "suite-episode", episode);
}

TestSuite generate_test_suite(const EnvironmentFactory& make_env, const PolicyHandle& policy,
                              const MutationConfig& config, int horizon, int workers) {
  validate(config);
  if (!policy) throw ContractViolation("generate_test_suite: null policy");
  if (horizon <= 0) horizon = make_env()->default_horizon();
  TestSuite suite;
  suite.config = config;
  suite.traces.resize(config.suite_size);

  const int effective_workers = policy->shareable() ? workers : 1;
  parallel_for(config.suite_size, effective_workers, [&](std::size_t i) {
    try {
      auto env = make_env();
      if (env->action_count() != policy->action_count()) {
        throw ContractViolation("policy has " + std::to_string(policy->action_count()) +
                                " actions but the environment has " + std::to_string(env->action_count()));
      }
      MutantController controller(*policy, suite.config, i);
      ExecutionTrace trace = run_episode(*env, controller, suite_episode_seed(config.master_seed, i), horizon);
      evaluate_condition(config.condition, trace);
      suite.traces[i] = std::move(trace);
    } catch (const std::exception& e) {
      throw ContractViolation("episode " + std::to_string(i) + ": " + e.what());
    }
  });

  // Deterministic merge in episode order.
  for (const auto& trace : suite.traces) {
    for (const auto& [key, mutated] : trace.abstract_visits) suite.encountered.insert(key);
    for (std::size_t s = 0; s < trace.actions.size(); ++s) {
      AbstractStateKey key = abstract(config.abstraction, trace.observations[s]);
      suite.representatives.try_emplace(std::move(key), trace.observations[s]);
    }
  }
  return suite;
}

BalanceReport check_balance(const TestSuite& suite) {
  BalanceReport report;
  report.pass_rate = suite.pass_rate();
  report.balanced = report.pass_rate >= 0.2 && report.pass_rate <= 0.8;
  std::ostringstream os;
  os << "pass rate " << report.pass_rate;
  if (report.pass_rate == 1.0) {
    os << ": all executions pass, SBFL scores are all 0";
  } else if (report.pass_rate == 0.0) {
    os << ": all executions fail";
  }
  if (!report.balanced) os << " (outside [0.2, 0.8]; consider retuning mu or the condition threshold)";
  report.message = os.str();
  return report;
}

json mutation_config_to_json(const MutationConfig& c) {
  return json{{"suite_size", c.suite_size},
              {"mu", c.mu},
              {"condition", {{"reward_at_least", c.condition.threshold()}}},
              {"default_action", to_string(c.default_action)},
              {"abstraction", abstraction_to_json(c.abstraction)},
              {"master_seed", c.master_seed}};
}

MutationConfig mutation_config_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": must be an object");
  MutationConfig c;
  auto field = [&](const char* name) -> const json& {
    if (!j.contains(name)) throw ConfigError(path + "." + name + ": missing");
    return j.at(name);
  };
  try {
    const auto& size = field("suite_size");
    if (!size.is_number_integer() || size.get<long long>() < 1) {
      throw ConfigError(path + ".suite_size: must be a positive integer");
    }
    c.suite_size = size.get<std::size_t>();
    c.mu = field("mu").get<double>();
    const auto& cond = field("condition");
    if (!cond.is_object() || !cond.contains("reward_at_least")) {
      throw ConfigError(path + ".condition: expected {\"reward_at_least\": X}");
    }
    c.condition = Condition::reward_at_least(cond.at("reward_at_least").get<double>());
    if (j.contains("default_action")) {
      try {
        c.default_action = default_action_from_string(j.at("default_action").get<std::string>());
      } catch (const ConfigError& e) {
        throw ConfigError(path + ".default_action: " + e.what());
      }
    }
    if (j.contains("abstraction")) c.abstraction = abstraction_from_json(j.at("abstraction"), path + ".abstraction");
    if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!(c.mu >= 0.0 && c.mu <= 1.0)) throw ConfigError(path + ".mu: must lie in [0, 1]");
  return c;
}

json suite_metadata(const TestSuite& suite) {
  json reps = json::array();
  for (const auto& [key, obs] : suite.representatives) reps.push_back(json::array({key.value, observation_to_json(obs)}));
  const auto kind = suite.traces.empty() ? Observation::Kind::kDiscrete : suite.traces.front().observation_kind;
  return json{{"config", mutation_config_to_json(suite.config)},
              {"suite_size", suite.traces.size()},
              {"pass_rate", suite.pass_rate()},
              {"encountered_states", suite.encountered.size()},
              {"observation_kind", to_string(kind)},
              {"representatives", std::move(reps)}};
}

void save_suite(const TestSuite& suite, const std::string& traces_path, const std::string& metadata_path) {
  std::ofstream traces(traces_path);
  if (!traces) throw std::runtime_error("cannot write " + traces_path);
  write_traces_jsonl(traces, suite.traces);
  std::ofstream meta(metadata_path);
  if (!meta) throw std::runtime_error("cannot write " + metadata_path);
  meta << suite_metadata(suite).dump(2) << '\n';
}

TestSuite load_suite(const std::string& traces_path, const std::string& metadata_path) {
  std::ifstream traces(traces_path);
  if (!traces) throw ConfigError("cannot read " + traces_path);
  std::ifstream meta_in(metadata_path);
  if (!meta_in) throw ConfigError("cannot read " + metadata_path);
  json meta;
  meta_in >> meta;

  TestSuite suite;
  suite.config = mutation_config_from_json(meta.at("config"), "config");
  suite.traces = read_traces_jsonl(traces);
  const auto kind = observation_kind_from_string(meta.at("observation_kind").get<std::string>());
  for (const auto& t : suite.traces) {
    for (const auto& [key, mutated] : t.abstract_visits) suite.encountered.insert(key);
  }
  for (const auto& r : meta.at("representatives")) {
    suite.representatives.emplace(AbstractStateKey(r.at(0).get<std::string>()), observation_from_json(r.at(1), kind));
  }
  return suite;
}

}  // namespace polrank
