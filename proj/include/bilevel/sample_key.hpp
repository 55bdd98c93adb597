#pragma once

#include <cstdint>
#include <random>

namespace bilevel {

/// Identifies one draw of an outer (xi) or inner (zeta) sample. Oracles are pure
/// functions of (x, y, SampleKey), so every stochastic quantity is reproducible.
struct SampleKey {
  std::uint64_t value = 0;

  friend bool operator==(SampleKey, SampleKey) = default;
};

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Key for slot `slot` of iteration `t` in the run seeded by `run_seed`.
constexpr SampleKey derive_key(std::uint64_t run_seed, std::uint64_t t, std::uint64_t slot) {
  std::uint64_t h = splitmix64(run_seed);
  h = splitmix64(h ^ t);
  h = splitmix64(h ^ (slot * 0xd6e8feb86659fd93ULL));
  return SampleKey{h};
}

/// Maps a uniform 64-bit word to [0, n) by multiply-shift (no rejection).
inline std::uint64_t scale_to_range(std::uint64_t r, std::uint64_t n) {
  __extension__ using u128 = unsigned __int128;
  return static_cast<std::uint64_t>((static_cast<u128>(r) * n) >> 64);
}

/// Uniform integer in [0, n) from a key.
inline std::uint64_t uniform_index(SampleKey key, std::uint64_t n) { return scale_to_range(splitmix64(key.value), n); }

/// Engine seeded from a key; used by task oracles to realize a sample.
inline std::mt19937_64 engine_for(SampleKey key) { return std::mt19937_64(key.value); }

}  // namespace bilevel
