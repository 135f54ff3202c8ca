#pragma once

#include <cstdint>
#include <string_view>

namespace equibench {

/// xoshiro256** generator with platform-independent uniform and normal draws.
///
/// All randomness in the library flows through named sub-streams derived from
/// a global seed, e.g. `Rng::stream(seed, "init")`, so any single stage can be
/// rerun without replaying the others.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream keyed by (seed, name).
  static Rng stream(std::uint64_t seed, std::string_view name);
  /// Independent stream keyed by (seed, name, index), e.g. one per event.
  static Rng stream(std::uint64_t seed, std::string_view name, std::uint64_t index);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (no cached second value).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace equibench
