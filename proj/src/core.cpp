#include "polrank/core.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "polrank/error.hpp"

namespace polrank {

using nlohmann::json;

Observation Observation::real(std::vector<double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ContractViolation("observation component " + std::to_string(i) + " is not finite");
    }
  }
  return Observation(std::move(values));
}

Observation Observation::discrete(std::vector<int> values) { return Observation(std::move(values)); }

std::size_t Observation::size() const {
  return std::visit([](const auto& v) { return v.size(); }, value_);
}

std::span<const double> Observation::reals() const {
  if (kind() != Kind::kReal) throw ContractViolation("observation is not real-valued");
  return std::get<0>(value_);
}

std::span<const int> Observation::ints() const {
  if (kind() != Kind::kDiscrete) throw ContractViolation("observation is not discrete");
  return std::get<1>(value_);
}

double Observation::component(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v.at(i)); }, value_);
}

std::string to_string(Observation::Kind kind) {
  return kind == Observation::Kind::kReal ? "real" : "discrete";
}

Observation::Kind observation_kind_from_string(const std::string& s) {
  if (s == "real") return Observation::Kind::kReal;
  if (s == "discrete") return Observation::Kind::kDiscrete;
  throw ConfigError("unknown observation kind '" + s + "'");
}

void check_trace_invariants(const ExecutionTrace& t) {
  if (t.observations.empty()) throw ContractViolation("trace has no observations");
  const std::size_t n = t.observations.size() - 1;
  if (t.actions.size() != n || t.rewards.size() != n || t.mutated_flags.size() != n) {
    throw ContractViolation("trace sequence lengths are incoherent");
  }
  double sum = 0.0;
  for (double r : t.rewards) sum += r;
  if (sum != t.total_reward) throw ContractViolation("trace total_reward differs from sum of rewards");
}

Condition Condition::reward_at_least(double threshold) {
  if (!std::isfinite(threshold)) throw ConfigError("condition threshold must be finite");
  return Condition(threshold);
}

bool Condition::holds(const ExecutionTrace& trace) const { return trace.total_reward >= threshold_; }

std::string Condition::describe() const {
  std::ostringstream os;
  os << "reward >= " << threshold_;
  return os.str();
}

bool evaluate_condition(const Condition& condition, ExecutionTrace& trace) {
  const bool verdict = condition.holds(trace);
  trace.passed = verdict;
  return verdict;
}

ExecutionTrace run_episode(Environment& env, Controller& controller, std::uint64_t seed,
                           int horizon) {
  if (horizon < 1) throw ContractViolation("horizon must be at least 1");
  ExecutionTrace trace;
  trace.observation_kind = env.observation_kind();
  trace.observations.push_back(env.reset(seed));
  controller.begin_episode(seed);

  const int action_count = env.action_count();
  for (int step = 0; step < horizon; ++step) {
    const Decision d = controller.decide(trace.observations.back(), trace.actions);
    if (d.action < 0 || d.action >= action_count) {
      throw ContractViolation("step " + std::to_string(step) + ": action " +
                              std::to_string(d.action) + " outside [0, " +
                              std::to_string(action_count) + ")");
    }
    if (d.key) {
      auto [it, inserted] = trace.abstract_visits.emplace(*d.key, d.defaulted);
      if (!inserted && it->second != d.defaulted) {
        throw ContractViolation("step " + std::to_string(step) + ": abstract state " +
                                d.key->value + " changed its mutation flag within the episode");
      }
    }
    StepOutcome out = env.step(d.action);
    trace.actions.push_back(d.action);
    trace.mutated_flags.push_back(d.defaulted);
    trace.rewards.push_back(out.reward);
    trace.total_reward += out.reward;
    trace.observations.push_back(std::move(out.observation));
    if (out.terminal) break;
  }
  return trace;
}

json observation_to_json(const Observation& obs) {
  if (obs.kind() == Observation::Kind::kReal) {
    auto r = obs.reals();
    return json(std::vector<double>(r.begin(), r.end()));
  }
  auto v = obs.ints();
  return json(std::vector<int>(v.begin(), v.end()));
}

Observation observation_from_json(const json& j, Observation::Kind kind) {
  if (!j.is_array()) throw ConfigError("observation must be a JSON array");
  if (kind == Observation::Kind::kReal) return Observation::real(j.get<std::vector<double>>());
  return Observation::discrete(j.get<std::vector<int>>());
}

json trace_to_json(const ExecutionTrace& t) {
  json j;
  j["observation_kind"] = to_string(t.observation_kind);
  json obs = json::array();
  for (const auto& o : t.observations) obs.push_back(observation_to_json(o));
  j["observations"] = std::move(obs);
  j["actions"] = t.actions;
  j["rewards"] = t.rewards;
  j["mutated_flags"] = std::vector<bool>(t.mutated_flags.begin(), t.mutated_flags.end());
  json visits = json::array();
  for (const auto& [key, mutated] : t.abstract_visits) visits.push_back(json::array({key.value, mutated}));
  j["abstract_visits"] = std::move(visits);
  j["total_reward"] = t.total_reward;
  j["passed"] = t.passed ? json(*t.passed) : json(nullptr);
  return j;
}

ExecutionTrace trace_from_json(const json& j) {
  ExecutionTrace t;
  t.observation_kind = observation_kind_from_string(j.at("observation_kind").get<std::string>());
  for (const auto& o : j.at("observations")) t.observations.push_back(observation_from_json(o, t.observation_kind));
  t.actions = j.at("actions").get<std::vector<ActionId>>();
  t.rewards = j.at("rewards").get<std::vector<double>>();
  for (const auto& f : j.at("mutated_flags")) t.mutated_flags.push_back(f.get<bool>());
  for (const auto& v : j.at("abstract_visits")) {
    t.abstract_visits.emplace(AbstractStateKey(v.at(0).get<std::string>()), v.at(1).get<bool>());
  }
  t.total_reward = j.at("total_reward").get<double>();
  if (!j.at("passed").is_null()) t.passed = j.at("passed").get<bool>();
  check_trace_invariants(t);
  return t;
}

void write_traces_jsonl(std::ostream& out, std::span<const ExecutionTrace> traces) {
  for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
}

std::vector<ExecutionTrace> read_traces_jsonl(std::istream& in) {
  std::vector<ExecutionTrace> traces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      traces.push_back(trace_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return traces;
}

}  // namespace polrank
