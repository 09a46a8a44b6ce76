#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "polrank/core.hpp"

namespace polrank {

/// A policy treated as a black box: only act() is ever consulted.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual int action_count() const = 0;
  virtual ActionId act(const Observation& obs) = 0;
  // Called once per episode with the episode seed.
  virtual void begin_episode(std::uint64_t /*seed*/) {}
  // Whether act() may be called from several threads at once.
  virtual bool shareable() const { return true; }
};

using PolicyHandle = std::shared_ptr<Policy>;

// Adapts a pure function. The function must be thread-safe.
class FunctionPolicy : public Policy {
 public:
  FunctionPolicy(std::string name, int action_count, std::function<ActionId(const Observation&)> fn)
      : name_(std::move(name)), action_count_(action_count), fn_(std::move(fn)) {}

  std::string name() const override { return name_; }
  int action_count() const override { return action_count_; }
  ActionId act(const Observation& obs) override { return fn_(obs); }

 private:
  std::string name_;
  int action_count_;
  std::function<ActionId(const Observation&)> fn_;
};

// Runs a policy unmodified.
class PolicyController : public Controller {
 public:
  explicit PolicyController(Policy& policy) : policy_(policy) {}
  void begin_episode(std::uint64_t seed) override { policy_.begin_episode(seed); }
  Decision decide(const Observation& obs, std::span<const ActionId>) override {
    return Decision{policy_.act(obs), false, std::nullopt};
  }

 private:
  Policy& policy_;
};

PolicyHandle constant_policy(ActionId action, int action_count);

// Walks down (or up) column 0 to the hole row, through the hole, down to the
// bottom row, then right to the goal.
PolicyHandle scripted_grid_policy();

inline constexpr double kCartPoleDefaultGain = 0.5;

// PushRight iff angle + gain * angular_velocity > 0.
PolicyHandle scripted_cartpole_policy(double gain = kCartPoleDefaultGain);

/// Lookup table over discrete observations with a fallback action.
class TabularPolicy : public Policy {
 public:
  using Table = std::map<std::vector<int>, ActionId>;

  TabularPolicy(int action_count, ActionId fallback, Table table = {}, std::string name = "tabular");

  std::string name() const override { return name_; }
  int action_count() const override { return action_count_; }
  ActionId act(const Observation& obs) override;

  ActionId fallback() const { return fallback_; }
  const Table& table() const { return table_; }

  nlohmann::json to_json() const;
  static TabularPolicy from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static TabularPolicy load(const std::string& path);

  bool operator==(const TabularPolicy& other) const {
    return action_count_ == other.action_count_ && fallback_ == other.fallback_ && table_ == other.table_;
  }

 private:
  std::string name_;
  int action_count_;
  ActionId fallback_;
  Table table_;
};

struct QLearningParams {
  double learning_rate = 0.5;
  double discount = 0.99;
  double epsilon = 0.1;
  ActionId fallback = 0;
  int horizon = 0;  // 0 selects the environment default
};

/// Epsilon-greedy tabular Q-learning. Returns the greedy policy over the
/// learned values (lowest action index wins ties); observations never
/// updated map to the fallback. Throws UnsupportedEnvironment for
/// continuous observation spaces.
TabularPolicy train_tabular_q(Environment& env, int episodes, const QLearningParams& params, std::uint64_t seed);

}  // namespace polrank
