#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace pgembed {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Small deterministic PRNG (xoshiro256++) with hand-rolled variate
/// generators, so that streams are reproducible across platforms and
/// independent of standard-library distribution internals.
///
/// Streams are keyed by an arbitrary tuple of 64-bit words; disjoint keys
/// give independent streams. This is what makes Gibbs sweeps bit-identical
/// regardless of how many worker threads process the rows.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { seed_state(seed); }

  /// Derive an independent stream from (seed, k1, k2, k3).
  Rng(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2 = 0,
      std::uint64_t k3 = 0) {
    std::uint64_t mix = seed;
    mix ^= 0x2545f4914f6cdd1dull * k1;
    std::uint64_t st = mix;
    mix ^= detail::splitmix64(st) + 0x9e3779b97f4a7c15ull * k2;
    mix ^= detail::splitmix64(st) + 0xd1b54a32d192ed03ull * k3;
    seed_state(mix);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on (0, 1); never returns exactly 0 or 1.
  double uniform() {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : std::numeric_limits<double>::min();
  }

  /// Standard normal via polar Box-Muller, one value per call.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * f;
    have_cached_ = true;
    return u * f;
  }

  /// Exponential with rate 1.
  double exponential() { return -std::log(uniform()); }

  // UniformRandomBitGenerator interface.
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<std::uint64_t>::max();
  }
  result_type operator()() { return next_u64(); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  void seed_state(std::uint64_t seed) {
    std::uint64_t st = seed;
    for (auto& s : s_) s = detail::splitmix64(st);
  }

  std::uint64_t s_[4];
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace pgembed
