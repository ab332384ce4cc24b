#pragma once

#include <cstdint>
#include <cmath>
#include <string>
#include <vector>

namespace vlbias {

/// SplitMix64 finalizer. Good avalanche, cheap, platform independent.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and up to two counters.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(a ^ 0x632be59bd9b4e019ULL)) ^
                    splitmix64(b ^ 0x9e6c63d0876a9a47ULL));
}

inline std::uint64_t hash_string(const std::string& s) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based PRNG (SplitMix64 sequence). The whole state is one u64, so
/// streams are trivially serializable and replayable on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Rejection sampled, unbiased. n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller (cosine branch only, so the generator
  /// carries no extra state between calls).
  double next_gaussian() {
    double u1;
    do {
      u1 = next_unit();
    } while (u1 <= 0.0);
    const double u2 = next_unit();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

/// One Bernoulli(1/2) draw addressed by (seed, step, sample index).
/// Replayable from the address alone; no stream state involved.
inline bool bernoulli_draw(std::uint64_t seed, std::uint64_t step, std::uint64_t index) {
  return (splitmix64(mix_seed(seed, step, index)) & 1ULL) != 0;
}

}  // namespace vlbias
