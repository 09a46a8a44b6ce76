#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace polrank {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

// Seed derivation shared by every stream in the library. Identical
// (master_seed, label, index) triples always give the same value.
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view label,
                          std::uint64_t index);

/// Deterministic pseudo-random stream. The bit stream of std::mt19937_64 is
/// fixed by the standard; conversions to reals and bounded integers are done
/// here so results do not depend on the standard library's distributions.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string_view label, std::uint64_t index);
  explicit RngStream(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform01();
  double uniform(double lo, double hi);
  // Uniform on [0, n); n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace polrank
