#include "polrank/policies.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

#include <nlohmann/json.hpp>

#include "polrank/environments.hpp"
#include "polrank/error.hpp"
#include "polrank/rng.hpp"

namespace polrank {

using nlohmann::json;

PolicyHandle constant_policy(ActionId action, int action_count) {
  if (action < 0 || action >= action_count) throw ConfigError("constant policy action out of range");
  return std::make_shared<FunctionPolicy>("constant-" + std::to_string(action), action_count,
                                          [action](const Observation&) { return action; });
}

namespace {

ActionId turn_towards(int direction, int desired) {
  switch ((desired - direction + kGridDirections) % kGridDirections) {
    case 0:
      return grid_action::kForward;
    case 3:
      return grid_action::kTurnLeft;
    default:
      return grid_action::kTurnRight;
  }
}

ActionId grid_rule(const Observation& obs) {
  auto v = obs.ints();
  if (v.size() != 5) throw ContractViolation("scripted grid policy expects (x, y, dir, wall, hole)");
  const int x = v[0], y = v[1], dir = v[2], wall = v[3], hole = v[4];
  constexpr int kRight = 0, kDown = 1, kUp = 3;
  int desired;
  if (x <= wall) {
    desired = y < hole ? kDown : (y > hole ? kUp : kRight);
  } else {
    desired = y < kGridSize - 1 ? kDown : kRight;
  }
  return turn_towards(dir, desired);
}

}  // namespace

PolicyHandle scripted_grid_policy() {
  return std::make_shared<FunctionPolicy>("scripted-grid", 3, grid_rule);
}

PolicyHandle scripted_cartpole_policy(double gain) {
  return std::make_shared<FunctionPolicy>("scripted-cartpole", 2, [gain](const Observation& obs) {
    const double angle = obs.component(2);
    const double angular_velocity = obs.component(3);
    return angle + gain * angular_velocity > 0 ? cartpole_action::kPushRight : cartpole_action::kPushLeft;
  });
}

// --- tabular ---------------------------------------------------------------

TabularPolicy::TabularPolicy(int action_count, ActionId fallback, Table table, std::string name)
    : name_(std::move(name)), action_count_(action_count), fallback_(fallback), table_(std::move(table)) {
  if (action_count < 1) throw ConfigError("tabular policy: action_count must be positive");
  if (fallback < 0 || fallback >= action_count) throw ConfigError("tabular policy: fallback out of range");
  for (const auto& [obs, a] : table_) {
    if (a < 0 || a >= action_count) throw ConfigError("tabular policy: table action out of range");
  }
}

ActionId TabularPolicy::act(const Observation& obs) {
  if (obs.kind() != Observation::Kind::kDiscrete) {
    throw UnsupportedEnvironment("tabular policy needs discrete observations");
  }
  auto v = obs.ints();
  auto it = table_.find(std::vector<int>(v.begin(), v.end()));
  return it == table_.end() ? fallback_ : it->second;
}

json TabularPolicy::to_json() const {
  json entries = json::array();
  for (const auto& [obs, a] : table_) entries.push_back(json::array({obs, a}));
  return json{{"action_count", action_count_}, {"fallback", fallback_}, {"entries", std::move(entries)}};
}

TabularPolicy TabularPolicy::from_json(const json& j) {
  try {
    Table table;
    for (const auto& e : j.at("entries")) table.emplace(e.at(0).get<std::vector<int>>(), e.at(1).get<ActionId>());
    return TabularPolicy(j.at("action_count").get<int>(), j.at("fallback").get<ActionId>(), std::move(table));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("tabular policy file: ") + e.what());
  }
}

void TabularPolicy::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump() << '\n';
}

TabularPolicy TabularPolicy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read tabular policy file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

// --- Q-learning ------------------------------------------------------------

TabularPolicy train_tabular_q(Environment& env, int episodes, const QLearningParams& params, std::uint64_t seed) {
  if (env.observation_kind() != Observation::Kind::kDiscrete) {
    throw UnsupportedEnvironment("tabular Q-learning needs discrete observations; " + env.name() +
                                 " is continuous");
  }
  if (episodes < 0) throw ConfigError("episodes must be non-negative");
  const int k = env.action_count();
  const int horizon = params.horizon > 0 ? params.horizon : env.default_horizon();
  std::map<std::vector<int>, std::vector<double>> q;

  auto to_vec = [](const Observation& o) {
    auto v = o.ints();
    return std::vector<int>(v.begin(), v.end());
  };

  for (int ep = 0; ep < episodes; ++ep) {
    RngStream rng(seed, "q-learning", static_cast<std::uint64_t>(ep));
    std::vector<int> s = to_vec(env.reset(derive_seed(seed, "q-learning-reset", static_cast<std::uint64_t>(ep))));
    for (int t = 0; t < horizon; ++t) {
      auto& qs = q.try_emplace(s, std::vector<double>(k, 0.0)).first->second;
      ActionId a;
      if (rng.uniform01() < params.epsilon) {
        a = static_cast<ActionId>(rng.uniform_int(static_cast<std::uint64_t>(k)));
      } else {
        // Greedy with uniformly random tie-breaking.
        double best = qs[0];
        for (int i = 1; i < k; ++i) best = std::max(best, qs[i]);
        std::vector<ActionId> ties;
        for (int i = 0; i < k; ++i) {
          if (qs[i] == best) ties.push_back(i);
        }
        a = ties[rng.uniform_int(ties.size())];
      }
      StepOutcome out = env.step(a);
      std::vector<int> next = to_vec(out.observation);
      double target = out.reward;
      if (!out.terminal) {
        auto it = q.find(next);
        if (it != q.end()) target += params.discount * *std::max_element(it->second.begin(), it->second.end());
      }
      qs[a] += params.learning_rate * (target - qs[a]);
      s = std::move(next);
      if (out.terminal) break;
    }
  }

  TabularPolicy::Table table;
  for (const auto& [obs, values] : q) {
    // States whose values never separated carry no preference.
    if (std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end()) continue;
    table.emplace(obs, static_cast<ActionId>(std::max_element(values.begin(), values.end()) - values.begin()));
  }
  return TabularPolicy(k, params.fallback, std::move(table), "q-learning");
}

}  // namespace polrank
