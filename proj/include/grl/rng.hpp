#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace grl {

/// splitmix64 finalizer. Every derived seed in the project goes through this
/// so that ports in other languages can reproduce the streams.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// seed for sub-stream `stream` of `base`: mix64(base ^ mix64(stream)).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  return mix64(base ^ mix64(stream));
}

/// Seeded generator. The engine is the standard mt19937_64; the mappings to
/// doubles and bounded integers are written out here because the standard
/// distributions differ between library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call).
  double normal();

  /// Index drawn from a probability vector by inverse CDF. Entries must be
  /// nonnegative and sum to 1 (within rounding); zero-probability entries
  /// are never returned.
  std::size_t categorical(std::span<const double> probs);

 private:
  std::mt19937_64 engine_;
};

}  // namespace grl
