#pragma once

// Seeded randomness. Every random draw in the project flows from an explicit
// seed through derive_seed(); there is no global generator.
//
// Seed splitting: derive_seed(parent, stream, index) hashes the triple with
// the SplitMix64 finalizer. Streams are fixed tags (see SeedStream) so that,
// e.g., sample i's clean-image seed and noise seed never collide.
//
// The distributions are written out here rather than taken from <random>
// because the standard distributions are implementation-defined, and dataset
// bytes should not depend on the standard library in use.

#include <cstdint>
#include <random>

namespace pgt {

enum class SeedStream : std::uint64_t {
  sample = 0x1,
  noise = 0x2,
  init = 0x3,
  shuffle = 0x4,
  calibration = 0x5,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, SeedStream stream,
                                    std::uint64_t index = 0) {
  return splitmix64(splitmix64(parent ^ (static_cast<std::uint64_t>(stream) << 56)) +
                    index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller (one value per call).
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace pgt
