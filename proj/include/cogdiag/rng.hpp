#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cogdiag {

// Seeded random stream. Uniform doubles are extracted from the raw 64-bit
// output directly so results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Derives an independent stream for a named purpose from one user seed.
  static Rng derive(std::uint64_t seed, std::string_view purpose) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : purpose) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return Rng(mix(seed ^ h));
  }

  // Stateless per-entry draw in [0, 1), keyed by (seed, tag, row, col).
  // Parameter initialization uses this so an entry's value depends only on
  // its own coordinates, never on how many other entries were drawn first.
  static double keyed_uniform01(std::uint64_t seed, std::string_view tag, int r, int c) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : tag) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ull;
    }
    std::uint64_t x = mix(seed);
    x = mix(x ^ h);
    x = mix(x ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r)) << 32 |
                 static_cast<std::uint32_t>(c)));
    return static_cast<double>(x >> 11) * 0x1.0p-53;
  }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace cogdiag
