#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "polrank/core.hpp"

namespace polrank {

struct IdentityAbstraction {
  bool operator==(const IdentityAbstraction&) const = default;
};

// Divide the angle (component 2) by angle_divisor, round every component to
// its number of decimals, then optionally take absolute values.
struct CartPoleQuantizer {
  std::array<int, 4> decimals{1, 1, 1, 1};
  double angle_divisor = 4.0;
  bool use_absolute_value = true;
  bool operator==(const CartPoleQuantizer&) const = default;
};

// Component i maps to floor(value / bin_widths[i]).
struct UniformQuantizer {
  std::vector<double> bin_widths;
  bool operator==(const UniformQuantizer&) const = default;
};

using AbstractionSpec = std::variant<IdentityAbstraction, CartPoleQuantizer, UniformQuantizer>;

// Throws ConfigError on out-of-range parameters.
void validate(const AbstractionSpec& spec);

/// Maps an observation to its canonical key. Components are joined with ','
/// in fixed notation, never scientific, with negative zero printed as zero.
/// Throws ConfigError when the observation's dimensionality does not fit.
AbstractStateKey abstract(const AbstractionSpec& spec, const Observation& obs);

std::string describe(const AbstractionSpec& spec);
nlohmann::json abstraction_to_json(const AbstractionSpec& spec);
// `path` prefixes error messages, e.g. "abstraction".
AbstractionSpec abstraction_from_json(const nlohmann::json& j, const std::string& path = "abstraction");

// Fixed-notation formatting used for keys.
std::string format_fixed(double value, int decimals);
std::string format_shortest(double value);

}  // namespace polrank
