#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace spoi {

// Deterministic RNG built on splitmix64. std::mt19937 would also be
// reproducible, but the standard distributions are not specified bit-exactly,
// and the checkpoint/dataset byte-identity contract needs every drawn value
// to be a pure function of the seed.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double u64_to_unit(std::uint64_t x) {
  // 53 significand bits -> [0, 1)
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

/// Sequential generator for weight init, shuffles, and test data.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // decorrelate trivially related seeds
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1).
  double uniform() { return u64_to_unit(next_u64()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // modulo bias is irrelevant at our scales (n << 2^64)
    return next_u64() % n;
  }

  /// Fisher-Yates permutation of {0, ..., n-1}.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  /// Independent substream labelled by a short tag.
  Rng derive(std::string_view tag) const {
    std::uint64_t h = state_ ^ 0x51f2cd5a1c3fe2a7ULL;
    for (const char c : tag) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      h *= 0x100000001b3ULL;
    }
    return Rng(h);
  }

 private:
  std::uint64_t state_;
};

/// Counter-based standard normal keyed by (seed, index). Evaluation order
/// does not matter, so parallel consumers stay reproducible.
inline double normal_at(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed ^ (0x2545f4914f6cdd1dULL * (index + 1));
  const std::uint64_t a = splitmix64(s);
  const std::uint64_t b = splitmix64(s);
  const double u1 = static_cast<double>((a >> 11) + 1) * 0x1.0p-53;
  const double u2 = u64_to_unit(b);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace spoi
