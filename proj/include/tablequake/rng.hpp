#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace tablequake {

// SplitMix64 (Steele, Lea & Flood). Fixed constants so a seed produces the
// same stream in every implementation of the harness.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform real in [0, 1) from the top 53 bits.
  constexpr double next_unit() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Index in [0, bound) by plain modulo reduction; bound must be > 0.
  constexpr std::size_t next_below(std::size_t bound) noexcept {
    return static_cast<std::size_t>(next() % bound);
  }

 private:
  std::uint64_t state_;
};

// The SplitMix64 output finalizer applied to a single value.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Durstenfeld Fisher-Yates: for i = n-1 down to 1, swap slot i with slot
// next_below(i + 1). Returns perm where output position k takes input perm[k].
std::vector<std::size_t> fisher_yates(std::size_t n, SplitMix64& rng);

// Fisher-Yates draws from one stream seeded with `seed`, repeated until the
// permutation is not the identity. n < 2 yields the identity.
std::vector<std::size_t> non_identity_permutation(std::size_t n, std::uint64_t seed);

// Seed for a named sub-stream: mix64(seed ^ fnv1a64(key)). Lets a run-level
// seed fan out per instance without depending on instance order.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) noexcept;

}  // namespace tablequake
