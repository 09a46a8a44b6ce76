#include "app/config.hpp"

#include <fstream>

#include "polrank/environments.hpp"
#include "polrank/error.hpp"
#include "polrank/extpolicy.hpp"

namespace polrank::app {

using nlohmann::json;

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return parts;
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& path) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": must be an object");
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(path + "." + key + ": unknown field");
  }
}

EnvConfig parse_env(const json& j) {
  require_object(j, "env");
  reject_unknown(j, "env", {"name", "params"});
  if (!j.contains("name") || !j["name"].is_string()) throw ConfigError("env.name: missing");
  EnvConfig e{j["name"].get<std::string>(), j.value("params", json::object())};
  require_object(e.params, "env.params");
  return e;
}

PolicyConfig parse_policy(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path, {"name", "params"});
  if (!j.contains("name") || !j["name"].is_string()) throw ConfigError(path + ".name: missing");
  PolicyConfig p{j["name"].get<std::string>(), j.value("params", json::object())};
  require_object(p.params, path + ".params");
  return p;
}

std::vector<double> parse_fractions(const json& j, const std::string& path, bool strictly_increasing) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": must be a non-empty array");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(path + ": entries must be numbers");
    const double x = v.get<double>();
    if (!(x >= 0.0 && x <= 1.0)) throw ConfigError(path + ": entries must lie in [0, 1]");
    if (strictly_increasing && !out.empty() && x <= out.back()) {
      throw ConfigError(path + ": must be strictly increasing");
    }
    out.push_back(x);
  }
  return out;
}

EvalConfig parse_eval(const json& j) {
  require_object(j, "eval");
  reject_unknown(j, "eval", {"n_test", "r_grid", "unseen_state_rule", "repeats", "seed", "baseline", "thresholds"});
  EvalConfig e;
  const auto n_test = get_or<long long>(j, "n_test", 100, "eval");
  if (n_test < 1) throw ConfigError("eval.n_test: must be at least 1");
  e.n_test = static_cast<std::size_t>(n_test);
  if (j.contains("r_grid")) e.r_grid = parse_fractions(j["r_grid"], "eval.r_grid", true);
  if (j.contains("unseen_state_rule")) {
    try {
      e.unseen_state_rule = unseen_rule_from_string(get_or<std::string>(j, "unseen_state_rule", "", "eval"));
    } catch (const ConfigError& err) {
      throw ConfigError(std::string("eval.unseen_state_rule: ") + err.what());
    }
  }
  e.repeats = get_or<int>(j, "repeats", 3, "eval");
  if (e.repeats < 1) throw ConfigError("eval.repeats: must be at least 1");
  e.seed = get_or<std::uint64_t>(j, "seed", 0, "eval");
  const auto baseline = get_or<std::string>(j, "baseline", "zero", "eval");
  if (baseline == "zero") {
    e.baseline = Baseline::kZero;
  } else if (baseline == "random") {
    e.baseline = Baseline::kRandom;
  } else {
    throw ConfigError("eval.baseline: expected zero or random, got '" + baseline + "'");
  }
  if (j.contains("thresholds")) {
    e.thresholds.clear();
    if (!j["thresholds"].is_array()) throw ConfigError("eval.thresholds: must be an array");
    for (const auto& t : j["thresholds"]) {
      if (!t.is_number()) throw ConfigError("eval.thresholds: entries must be numbers");
      e.thresholds.push_back(t.get<double>());
    }
  }
  return e;
}

AgreeConfig parse_agree(const json& j) {
  require_object(j, "agree");
  reject_unknown(j, "agree", {"policy", "measure", "fractions"});
  AgreeConfig a;
  if (j.contains("policy")) a.other = parse_policy(j["policy"], "agree.policy");
  a.measure = get_or<std::string>(j, "measure", a.measure, "agree");
  if (j.contains("fractions")) a.fractions = parse_fractions(j["fractions"], "agree.fractions", false);
  return a;
}

OracleCheckConfig parse_oracle(const json& j) {
  require_object(j, "oracle");
  reject_unknown(j, "oracle", {"mus", "episodes", "sigmas"});
  OracleCheckConfig o;
  if (j.contains("mus")) o.mus = parse_fractions(j["mus"], "oracle.mus", false);
  const auto episodes = get_or<long long>(j, "episodes", 50000, "oracle");
  if (episodes < 1) throw ConfigError("oracle.episodes: must be at least 1");
  o.episodes = static_cast<std::size_t>(episodes);
  o.sigmas = get_or<double>(j, "sigmas", 3.0, "oracle");
  if (!(o.sigmas > 0.0)) throw ConfigError("oracle.sigmas: must be positive");
  return o;
}

}  // namespace

std::string to_string(Baseline b) { return b == Baseline::kZero ? "zero" : "random"; }

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected path=value");
  const auto parts = split_path(assignment.substr(0, eq));
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("override '" + assignment + "': empty path segment");
    if (!node->is_object()) throw ConfigError("override '" + assignment + "': " + parts[i] + " is not an object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override '" + assignment + "': parent is not an object");
  (*node)[parts.back()] = std::move(value);
}

RunConfig parse_config(const json& j) {
  require_object(j, "config");
  reject_unknown(j, "config",
                 {"env", "policy", "abstraction", "mutation", "horizon", "ranking", "eval", "agree", "oracle", "output_dir"});
  RunConfig c;
  c.source = j;
  if (!j.contains("env")) throw ConfigError("env: missing");
  c.env = parse_env(j["env"]);
  if (!j.contains("policy")) throw ConfigError("policy: missing");
  c.policy = parse_policy(j["policy"], "policy");
  if (!j.contains("mutation")) throw ConfigError("mutation: missing");
  c.mutation = mutation_config_from_json(j["mutation"], "mutation");
  if (j.contains("abstraction")) {
    if (j["mutation"].contains("abstraction")) {
      throw ConfigError("abstraction: given both at top level and under mutation");
    }
    c.mutation.abstraction = abstraction_from_json(j["abstraction"], "abstraction");
  }
  c.horizon = get_or<int>(j, "horizon", 0, "config");
  if (c.horizon < 0) throw ConfigError("horizon: must be non-negative");
  if (j.contains("ranking")) {
    require_object(j["ranking"], "ranking");
    reject_unknown(j["ranking"], "ranking", {"executed_role"});
    try {
      c.executed_role = executed_role_from_string(get_or<std::string>(j["ranking"], "executed_role", "mutated", "ranking"));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("ranking.executed_role: ") + e.what());
    }
  }
  if (j.contains("eval")) c.eval = parse_eval(j["eval"]);
  if (j.contains("agree")) c.agree = parse_agree(j["agree"]);
  if (j.contains("oracle")) c.oracle = parse_oracle(j["oracle"]);
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir, "config");

  // Resolve names early so typos fail as config errors, not mid-run.
  const auto factory = make_env_factory(c.env);
  const auto probe = factory();
  if (c.policy.name != "q_learning" && c.policy.name != "external" && c.policy.name != "tabular") {
    const auto p = make_policy(c.policy, factory);
    if (p->action_count() != probe->action_count()) {
      throw ConfigError("policy: has " + std::to_string(p->action_count()) + " actions, env has " +
                        std::to_string(probe->action_count()));
    }
  }
  return c;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return parse_config(j);
}

EnvironmentFactory make_env_factory(const EnvConfig& env) {
  const auto& p = env.params;
  if (env.name == "chain") {
    reject_unknown(p, "env.params", {"n", "horizon"});
    ChainSpec spec;
    spec.n = get_or<int>(p, "n", spec.n, "env.params");
    spec.horizon = get_or<int>(p, "horizon", spec.horizon, "env.params");
    if (spec.n < 2) throw ConfigError("env.params.n: must be at least 2");
    if (spec.horizon < 0) throw ConfigError("env.params.horizon: must be non-negative");
    return [spec] { return chain_env(spec); };
  }
  if (env.name == "grid-crossing" || env.name == "grid_crossing") {
    reject_unknown(p, "env.params", {"horizon", "randomize_layout", "layout_index"});
    GridCrossingSpec spec;
    spec.horizon = get_or<int>(p, "horizon", spec.horizon, "env.params");
    spec.randomize_layout = get_or<bool>(p, "randomize_layout", spec.randomize_layout, "env.params");
    const int index = get_or<int>(p, "layout_index", 17, "env.params");
    if (spec.horizon < 1) throw ConfigError("env.params.horizon: must be at least 1");
    if (index < 0 || index >= kGridLayoutCount) throw ConfigError("env.params.layout_index: must lie in [0, 35)");
    return [spec, index] { return std::make_unique<GridCrossingEnv>(spec, grid_layout_by_index(index)); };
  }
  if (env.name == "cartpole") {
    reject_unknown(p, "env.params", {"horizon"});
    CartPoleSpec spec;
    spec.horizon = get_or<int>(p, "horizon", spec.horizon, "env.params");
    if (spec.horizon < 1) throw ConfigError("env.params.horizon: must be at least 1");
    return [spec] { return cartpole_env(spec); };
  }
  throw ConfigError("env.name: unknown environment '" + env.name + "' (expected chain, grid-crossing or cartpole)");
}

PolicyHandle make_policy(const PolicyConfig& policy, const EnvironmentFactory& make_env) {
  const auto& p = policy.params;
  const std::string path = "policy.params";
  if (policy.name == "constant") {
    reject_unknown(p, path, {"action"});
    const auto env = make_env();
    const int action = get_or<int>(p, "action", 0, path);
    if (action < 0 || action >= env->action_count()) throw ConfigError(path + ".action: out of range");
    return constant_policy(action, env->action_count());
  }
  if (policy.name == "scripted_grid") {
    reject_unknown(p, path, {});
    return scripted_grid_policy();
  }
  if (policy.name == "scripted_cartpole") {
    reject_unknown(p, path, {"gain"});
    return scripted_cartpole_policy(get_or<double>(p, "gain", kCartPoleDefaultGain, path));
  }
  if (policy.name == "tabular") {
    reject_unknown(p, path, {"path"});
    if (!p.contains("path")) throw ConfigError(path + ".path: missing");
    return std::make_shared<TabularPolicy>(TabularPolicy::load(p["path"].get<std::string>()));
  }
  if (policy.name == "q_learning") {
    reject_unknown(p, path, {"episodes", "seed", "learning_rate", "discount", "epsilon", "fallback", "horizon"});
    QLearningParams params;
    params.learning_rate = get_or<double>(p, "learning_rate", params.learning_rate, path);
    params.discount = get_or<double>(p, "discount", params.discount, path);
    params.epsilon = get_or<double>(p, "epsilon", params.epsilon, path);
    params.fallback = get_or<int>(p, "fallback", params.fallback, path);
    params.horizon = get_or<int>(p, "horizon", params.horizon, path);
    const int episodes = get_or<int>(p, "episodes", 1000, path);
    if (episodes < 0) throw ConfigError(path + ".episodes: must be non-negative");
    auto env = make_env();
    return std::make_shared<TabularPolicy>(
        train_tabular_q(*env, episodes, params, get_or<std::uint64_t>(p, "seed", 0, path)));
  }
  if (policy.name == "external") {
    reject_unknown(p, path, {"command", "handshake_timeout_ms", "act_timeout_ms"});
    if (!p.contains("command") || !p["command"].is_array() || p["command"].empty()) {
      throw ConfigError(path + ".command: must be a non-empty array of strings");
    }
    const auto argv = p["command"].get<std::vector<std::string>>();
    auto handle = ProtocolHandle::spawn(argv, get_or<int>(p, "handshake_timeout_ms", kDefaultHandshakeTimeoutMs, path));
    return external_policy(std::move(handle), get_or<int>(p, "act_timeout_ms", kDefaultActTimeoutMs, path));
  }
  throw ConfigError("policy.name: unknown policy '" + policy.name + "'");
}

json ranking_identity(const RunConfig& config) {
  return json{{"env", {{"name", config.env.name}, {"params", config.env.params}}},
              {"abstraction", abstraction_to_json(config.mutation.abstraction)}};
}

}  // namespace polrank::app
