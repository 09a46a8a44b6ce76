#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "polrank/abstraction.hpp"
#include "polrank/core.hpp"
#include "polrank/policies.hpp"
#include "polrank/rng.hpp"

namespace polrank {

enum class DefaultActionKind {
  kRepeatPrevious,  // a_{i-1}; the policy's own action at step 0
  kRandomMemoized,  // uniform draw, reused on every revisit within the episode
};

std::string to_string(DefaultActionKind kind);
DefaultActionKind default_action_from_string(const std::string& s);

/// Per-episode mutation state. Entries are written once and never change.
struct EpisodeMutationMemo {
  std::unordered_map<AbstractStateKey, bool, AbstractStateKeyHash> decided;
  std::unordered_map<AbstractStateKey, ActionId, AbstractStateKeyHash> sampled_actions;
};

struct MutationConfig {
  std::size_t suite_size = 1000;
  double mu = 0.2;
  Condition condition = Condition::reward_at_least(0.0);
  DefaultActionKind default_action = DefaultActionKind::kRepeatPrevious;
  AbstractionSpec abstraction = IdentityAbstraction{};
  std::uint64_t master_seed = 0;
};

// Throws ConfigError when suite_size is zero or mu lies outside [0, 1].
void validate(const MutationConfig& config);

/// The default action at one step. `policy_action` is only consulted for
/// repeat-previous at step 0; passing nullopt there is a contract violation.
ActionId default_action(DefaultActionKind kind, std::span<const ActionId> history,
                        std::optional<ActionId> policy_action, const AbstractStateKey& key,
                        EpisodeMutationMemo& memo, RngStream& rng, int action_count);

struct MutantStep {
  ActionId action = 0;
  bool was_default = false;
};

/// On first visit of `key` draws u ~ U[0,1) from `mutation_rng` and records
/// the decision u < mu; afterwards replays it. Mutated states take the
/// default action, the rest ask the policy.
MutantStep mutant_step_action(Policy& policy, const Observation& obs, const AbstractStateKey& key,
                              EpisodeMutationMemo& memo, double mu, RngStream& mutation_rng,
                              DefaultActionKind kind, std::span<const ActionId> history,
                              RngStream& default_rng);

/// Controller running one mutant execution.
class MutantController : public Controller {
 public:
  MutantController(Policy& policy, const MutationConfig& config, std::uint64_t episode_index);

  void begin_episode(std::uint64_t seed) override;
  Decision decide(const Observation& obs, std::span<const ActionId> history) override;

  const EpisodeMutationMemo& memo() const { return memo_; }

 private:
  Policy& policy_;
  const MutationConfig& config_;
  EpisodeMutationMemo memo_;
  RngStream mutation_rng_;
  RngStream default_rng_;
};

struct TestSuite {
  std::vector<ExecutionTrace> traces;
  MutationConfig config;
  std::set<AbstractStateKey> encountered;
  // First observation seen for each key, in (episode, step) order.
  std::map<AbstractStateKey, Observation> representatives;

  double pass_rate() const;
};

// Seed handed to env.reset for suite episode i.
std::uint64_t suite_episode_seed(std::uint64_t master_seed, std::size_t episode);

/// Runs config.suite_size mutant executions and labels each with the
/// condition. Episodes are independent; the result does not depend on
/// `workers`. An episode that breaks a contract aborts the whole generation
/// with a ContractViolation naming the episode index. A horizon of 0 means
/// the environment's default.
TestSuite generate_test_suite(const EnvironmentFactory& make_env, const PolicyHandle& policy,
                              const MutationConfig& config, int horizon, int workers = 1);

struct BalanceReport {
  double pass_rate = 0.0;
  bool balanced = true;  // pass rate inside [0.2, 0.8]
  std::string message;
};

BalanceReport check_balance(const TestSuite& suite);

nlohmann::json mutation_config_to_json(const MutationConfig& config);
MutationConfig mutation_config_from_json(const nlohmann::json& j, const std::string& path = "mutation");

// Suite persistence: JSON-lines traces plus a metadata sidecar.
nlohmann::json suite_metadata(const TestSuite& suite);
void save_suite(const TestSuite& suite, const std::string& traces_path, const std::string& metadata_path);
TestSuite load_suite(const std::string& traces_path, const std::string& metadata_path);

}  // namespace polrank
