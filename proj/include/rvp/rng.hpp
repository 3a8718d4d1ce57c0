#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

namespace rvp {

// SplitMix64 (Steele, Lea & Flood, 2014). Every draw in the engine comes from
// this generator, never from std:: distributions. Changing the algorithm
// means bumping the engine version.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_open0() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

  // Uniform integer in [0, bound) by rejection, no modulo bias.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % bound;
  }

  // Standard normal via Box-Muller, cosine branch only: two uniforms per draw.
  double normal() {
    const double u1 = uniform_open0();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

// Independent sub-stream for a (seed, purpose) pair.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 g(seed ^ (stream * 0xD1B54A32D192ED03ULL));
  return g.next();
}

namespace streams {
inline constexpr std::uint64_t kRandomFill = 1;
inline constexpr std::uint64_t kLabeling = 2;
inline constexpr std::uint64_t kSynthOutcome = 3;
inline constexpr std::uint64_t kSynthNoise = 4;
inline constexpr std::uint64_t kSynthCovariates = 5;
}  // namespace streams

// Fisher-Yates shuffle driven by SplitMix64, iterating from the back.
template <class T>
void shuffle(std::vector<T>& v, SplitMix64& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(g.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  SplitMix64 g(seed);
  shuffle(idx, g);
  return idx;
}

}  // namespace rvp
