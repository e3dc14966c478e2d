#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace psan {

// All randomness in the project flows through these helpers so that a seed
// fixes every draw bit-for-bit. std::shuffle and the standard distributions
// are implementation-defined, so we roll the few primitives we need by hand.

// Uniform double in [0, 1) with 53 bits of the engine's output.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_uniform(rng);
}

// Uniform integer in [0, n). The modulo bias is irrelevant at our scales.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  return n == 0 ? 0 : rng() % n;
}

// Fisher-Yates shuffle driven by the engine directly.
template <typename T>
void seeded_shuffle(std::vector<T>& xs, std::mt19937_64& rng) {
  for (std::size_t i = xs.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(xs[i - 1], xs[j]);
  }
}

}  // namespace psan
