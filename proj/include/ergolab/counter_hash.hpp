#pragma once

#include <cstdint>

namespace ergolab {

// Stateless counter-based uniform generator: u(key, counter) depends only on
// its arguments, so any index of any stream is O(1) addressable.
//
// The construction is the SplitMix64 output function applied to a Weyl
// sequence whose starting point is itself a mixed key. Adjacent keys land on
// unrelated Weyl offsets.

constexpr std::uint64_t kWeylIncrement = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t stream_key(std::uint64_t seed) noexcept {
  return mix64(seed ^ 0x6A09E667F3BCC909ULL);
}

constexpr std::uint64_t counter_bits(std::uint64_t key, std::uint64_t counter) noexcept {
  return mix64(key + counter * kWeylIncrement);
}

// 53-bit uniform in [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) noexcept {
  return to_unit(counter_bits(key, counter));
}

// Derive the seed of the t-th member of a seed family.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return mix64(stream_key(base) + (index + 1) * 0xD1B54A32D192ED03ULL);
}

}  // namespace ergolab
