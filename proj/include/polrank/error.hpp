#pragma once

#include <stdexcept>
#include <string>

namespace polrank {

// A caller or callee broke an interface contract (bad action id, step after
// terminal, unlabeled trace, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid user-supplied configuration. The message starts with the field path
// when one is known, e.g. "mutation.mu: must lie in [0, 1]".
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The requested operation does not apply to this environment or policy kind.
class UnsupportedEnvironment : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UndefinedNormalization : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Exhaustive enumeration would exceed the configured state or branch bound.
class OracleBoundExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace polrank
