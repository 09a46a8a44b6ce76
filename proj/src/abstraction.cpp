#include "polrank/abstraction.hpp"

#include <charconv>
#include <cmath>

#include <nlohmann/json.hpp>

#include "polrank/error.hpp"

namespace polrank {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string strip_negative_zero(std::string s) {
  if (s.empty() || s[0] != '-') return s;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] != '0' && s[i] != '.') return s;
  }
  return s.substr(1);
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ',';
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string format_fixed(double value, int decimals) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, decimals);
  if (res.ec != std::errc{}) throw ContractViolation("cannot format value for abstraction key");
  return strip_negative_zero(std::string(buf, res.ptr));
}

std::string format_shortest(double value) {
  char buf[512];
  auto res = std::to_chars(buf, buf + sizeof buf, value == 0.0 ? 0.0 : value, std::chars_format::fixed);
  if (res.ec != std::errc{}) throw ContractViolation("cannot format value for abstraction key");
  return std::string(buf, res.ptr);
}

void validate(const AbstractionSpec& spec) {
  std::visit(overloaded{
                 [](const IdentityAbstraction&) {},
                 [](const CartPoleQuantizer& q) {
                   for (int d : q.decimals) {
                     if (d < 0 || d > 2) throw ConfigError("abstraction.decimals: each entry must lie in [0, 2]");
                   }
                   if (!(q.angle_divisor > 0)) throw ConfigError("abstraction.angle_divisor: must be positive");
                 },
                 [](const UniformQuantizer& q) {
                   if (q.bin_widths.empty()) throw ConfigError("abstraction.bin_widths: must not be empty");
                   for (double w : q.bin_widths) {
                     if (!(w > 0) || !std::isfinite(w)) throw ConfigError("abstraction.bin_widths: widths must be positive");
                   }
                 },
             },
             spec);
}

AbstractStateKey abstract(const AbstractionSpec& spec, const Observation& obs) {
  return std::visit(
      overloaded{
          [&](const IdentityAbstraction&) {
            std::vector<std::string> parts;
            parts.reserve(obs.size());
            if (obs.kind() == Observation::Kind::kDiscrete) {
              for (int v : obs.ints()) parts.push_back(std::to_string(v));
            } else {
              for (double v : obs.reals()) parts.push_back(format_shortest(v));
            }
            return AbstractStateKey(join(parts));
          },
          [&](const CartPoleQuantizer& q) {
            if (obs.size() != 4) {
              throw ConfigError("abstraction: cartpole quantizer expects 4 components, got " +
                                std::to_string(obs.size()));
            }
            std::vector<std::string> parts;
            for (std::size_t i = 0; i < 4; ++i) {
              double v = obs.component(i);
              if (i == 2) v /= q.angle_divisor;
              // Rounding is symmetric, so abs(round(v)) == round(abs(v)).
              if (q.use_absolute_value) v = std::abs(v);
              parts.push_back(format_fixed(v, q.decimals[i]));
            }
            return AbstractStateKey(join(parts));
          },
          [&](const UniformQuantizer& q) {
            if (obs.size() != q.bin_widths.size()) {
              throw ConfigError("abstraction: uniform quantizer has " + std::to_string(q.bin_widths.size()) +
                                " bin widths but the observation has " + std::to_string(obs.size()) +
                                " components");
            }
            std::vector<std::string> parts;
            for (std::size_t i = 0; i < obs.size(); ++i) {
              const auto bin = static_cast<long long>(std::floor(obs.component(i) / q.bin_widths[i]));
              parts.push_back(std::to_string(bin));
            }
            return AbstractStateKey(join(parts));
          },
      },
      spec);
}

std::string describe(const AbstractionSpec& spec) { return abstraction_to_json(spec).dump(); }

json abstraction_to_json(const AbstractionSpec& spec) {
  return std::visit(overloaded{
                        [](const IdentityAbstraction&) { return json{{"kind", "identity"}}; },
                        [](const CartPoleQuantizer& q) {
                          return json{{"kind", "cartpole_quantizer"},
                                      {"decimals", q.decimals},
                                      {"angle_divisor", q.angle_divisor},
                                      {"use_absolute_value", q.use_absolute_value}};
                        },
                        [](const UniformQuantizer& q) {
                          return json{{"kind", "uniform_quantizer"}, {"bin_widths", q.bin_widths}};
                        },
                    },
                    spec);
}

AbstractionSpec abstraction_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": must be an object");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError(path + ".kind: missing or not a string");
  const auto kind = j["kind"].get<std::string>();
  AbstractionSpec spec;
  try {
    if (kind == "identity") {
      spec = IdentityAbstraction{};
    } else if (kind == "cartpole_quantizer") {
      CartPoleQuantizer q;
      if (j.contains("decimals")) {
        const auto& d = j["decimals"];
        if (d.is_number_integer()) {
          q.decimals.fill(d.get<int>());
        } else {
          auto v = d.get<std::vector<int>>();
          if (v.size() != 4) throw ConfigError(path + ".decimals: needs 4 entries");
          std::copy(v.begin(), v.end(), q.decimals.begin());
        }
      }
      if (j.contains("angle_divisor")) q.angle_divisor = j["angle_divisor"].get<double>();
      if (j.contains("use_absolute_value")) q.use_absolute_value = j["use_absolute_value"].get<bool>();
      spec = q;
    } else if (kind == "uniform_quantizer") {
      if (!j.contains("bin_widths")) throw ConfigError(path + ".bin_widths: missing");
      spec = UniformQuantizer{j["bin_widths"].get<std::vector<double>>()};
    } else {
      throw ConfigError(path + ".kind: unknown abstraction '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  try {
    validate(spec);
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    if (msg.rfind("abstraction", 0) == 0) msg = path + msg.substr(std::string("abstraction").size());
    throw ConfigError(msg);
  }
  return spec;
}

}  // namespace polrank
