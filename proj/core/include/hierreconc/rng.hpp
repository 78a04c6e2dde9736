#pragma once

#include <cstdint>
#include <random>

namespace hierreconc {

/// SplitMix64 finalizer; used to derive independent substream seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seeded random generator handle.
///
/// A handle owns one Mersenne Twister stream. `substream(key)` returns a fresh
/// handle whose seed is `mix64(seed ^ mix64(key))`, so a derived stream depends
/// only on the parent seed and the key, never on how much of the parent stream
/// has been consumed. Handles are not thread-safe; give each worker its own
/// substream.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  engine_type& engine() noexcept { return engine_; }

  Rng substream(std::uint64_t key) const { return Rng(derive_seed(seed_, key)); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) noexcept;

 private:
  std::uint64_t seed_;
  engine_type engine_;
};

}  // namespace hierreconc
