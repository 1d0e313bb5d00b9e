#pragma once

#include <cstdint>
#include <cmath>

namespace ionphase {

// SplitMix64 finalizer. All randomness in the library is derived from this
// mixer so that results are bit-reproducible across platforms for a fixed
// seed: only 64-bit integer arithmetic and one double division are involved.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Key derivation for independent sub-streams (points, trials, resamples).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(seed ^ 0x517CC1B727220A95ull) ^ mix64(a) ^ (mix64(b) << 1 | 1));
}

/// Uniform double in [0, 1) from one 64-bit word.
inline double u01_from_bits(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based generator: value at (stream, counter) is a pure function of
/// the key, so draws can be evaluated in any order or in parallel.
struct CounterRng {
  std::uint64_t seed = 0;

  double uniform(std::uint64_t stream, std::uint64_t counter) const {
    return u01_from_bits(mix64(derive_seed(seed, stream, counter)));
  }
};

/// Sequential generator for single-threaded evolution loops (GA selection,
/// crossover, mutation). SplitMix64 stream plus Box-Muller Gaussians.
class SeqRng {
 public:
  explicit SeqRng(std::uint64_t seed) : state_(mix64(seed ^ 0xD1B54A32D192ED03ull)) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  double uniform() { return u01_from_bits(next_u64()); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ionphase
