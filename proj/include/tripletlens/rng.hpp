#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace tl {

/// Mixes a master seed with a stream name and index into an independent seed.
/// All randomness in the project flows through named sub-streams derived this
/// way (data, init, sampling, support, ...).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t index = 0);

/// Deterministic random source. The engine is mt19937_64; the distributions
/// are implemented here so that draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  bool coin(double p = 0.5) { return uniform() < p; }
  /// Standard normal (Box-Muller, no cached second value).
  double normal();

  Rng split(std::string_view stream, std::uint64_t index = 0) const {
    return Rng(derive_seed(seed_, stream, index));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace tl
