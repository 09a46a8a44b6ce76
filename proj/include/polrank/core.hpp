#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace polrank {

// Index into an environment's finite action set.
using ActionId = std::int32_t;

/// One environment observation. Continuous environments produce real vectors,
/// discrete ones small integer tuples; the dimensionality is fixed per
/// environment and real components are always finite.
class Observation {
 public:
  enum class Kind { kReal, kDiscrete };

  Observation() : value_(std::vector<int>{}) {}
  static Observation real(std::vector<double> values);
  static Observation discrete(std::vector<int> values);

  Kind kind() const { return value_.index() == 0 ? Kind::kReal : Kind::kDiscrete; }
  std::size_t size() const;
  std::span<const double> reals() const;
  std::span<const int> ints() const;
  // Component i as a real regardless of kind.
  double component(std::size_t i) const;

  bool operator==(const Observation&) const = default;

 private:
  explicit Observation(std::variant<std::vector<double>, std::vector<int>> v) : value_(std::move(v)) {}
  std::variant<std::vector<double>, std::vector<int>> value_;
};

std::string to_string(Observation::Kind kind);
Observation::Kind observation_kind_from_string(const std::string& s);

/// Canonical string form of an abstracted observation.
struct AbstractStateKey {
  std::string value;

  AbstractStateKey() = default;
  explicit AbstractStateKey(std::string v) : value(std::move(v)) {}
  auto operator<=>(const AbstractStateKey&) const = default;
};

struct AbstractStateKeyHash {
  std::size_t operator()(const AbstractStateKey& k) const noexcept {
    return std::hash<std::string>{}(k.value);
  }
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  bool terminal = false;
};

/// Episodic environment. Instances are single-owner state machines: create
/// one per concurrently running episode.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual int action_count() const = 0;
  virtual int default_horizon() const = 0;
  virtual Observation::Kind observation_kind() const = 0;
  // True when transitions and the initial state do not depend on the reset
  // seed, which makes the environment enumerable by the exact oracle.
  virtual bool deterministic() const { return false; }
  // Discount factor carried as metadata only; episode rewards are undiscounted.
  virtual double discount() const { return 1.0; }

  virtual Observation reset(std::uint64_t seed) = 0;
  // Throws ContractViolation when called after a terminal step.
  virtual StepOutcome step(ActionId action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

using EnvironmentFactory = std::function<std::unique_ptr<Environment>()>;

/// What a controller chose at one step.
struct Decision {
  ActionId action = 0;
  // True iff the default action replaced the policy's action.
  bool defaulted = false;
  // Abstract state of the observation, when the controller computed one.
  std::optional<AbstractStateKey> key;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual void begin_episode(std::uint64_t /*seed*/) {}
  virtual Decision decide(const Observation& obs, std::span<const ActionId> history) = 0;
};

// Adapts a plain observation -> action function.
class FunctionController : public Controller {
 public:
  explicit FunctionController(std::function<ActionId(const Observation&)> fn) : fn_(std::move(fn)) {}
  Decision decide(const Observation& obs, std::span<const ActionId>) override {
    return Decision{fn_(obs), false, std::nullopt};
  }

 private:
  std::function<ActionId(const Observation&)> fn_;
};

/// One episode.
///
/// Invariants: actions, rewards and mutated_flags all have
/// observations.size() - 1 entries; total_reward is the left-to-right sum of
/// rewards; every abstract state visited appears once in abstract_visits with
/// the mutation flag it carried for the whole episode.
struct ExecutionTrace {
  Observation::Kind observation_kind = Observation::Kind::kDiscrete;
  std::vector<Observation> observations;
  std::vector<ActionId> actions;
  std::vector<double> rewards;
  std::vector<bool> mutated_flags;
  std::map<AbstractStateKey, bool> abstract_visits;
  double total_reward = 0.0;
  std::optional<bool> passed;

  std::size_t length() const { return actions.size(); }
  bool operator==(const ExecutionTrace&) const = default;
};

// Throws ContractViolation if any trace invariant is broken.
void check_trace_invariants(const ExecutionTrace& trace);

/// Pass/fail predicate over a trace. Only the reward_at_least form exists.
class Condition {
 public:
  static Condition reward_at_least(double threshold);

  double threshold() const { return threshold_; }
  // Pure: inclusive comparison total_reward >= threshold.
  bool holds(const ExecutionTrace& trace) const;
  std::string describe() const;

  bool operator==(const Condition&) const = default;

 private:
  explicit Condition(double t) : threshold_(t) {}
  double threshold_ = 0.0;
};

// Evaluates the condition and stores the verdict in trace.passed.
bool evaluate_condition(const Condition& condition, ExecutionTrace& trace);

/// Runs one episode until a terminal step or `horizon` steps, whichever comes
/// first. Throws ContractViolation naming the step index when the controller
/// picks an action outside [0, action_count) or reports an inconsistent
/// mutation flag for a revisited abstract state.
ExecutionTrace run_episode(Environment& env, Controller& controller, std::uint64_t seed,
                           int horizon);

// Trace persistence: one JSON object per line.
nlohmann::json trace_to_json(const ExecutionTrace& trace);
ExecutionTrace trace_from_json(const nlohmann::json& j);
void write_traces_jsonl(std::ostream& out, std::span<const ExecutionTrace> traces);
std::vector<ExecutionTrace> read_traces_jsonl(std::istream& in);

nlohmann::json observation_to_json(const Observation& obs);
Observation observation_from_json(const nlohmann::json& j, Observation::Kind kind);

}  // namespace polrank
