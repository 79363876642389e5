#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace isde {

/// SplitMix64 generator. Cheap to construct, which makes it suitable for the
/// keyed per-particle noise streams of the integrator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Derives a stream seed from an ordered key. Each component is absorbed by
/// one SplitMix64 round, so (a, b) and (b, a) give unrelated streams.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (std::uint64_t k : key) {
    SplitMix64 mix(h ^ k);
    h = mix();
  }
  return h;
}

}  // namespace isde
