#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace kgbilm {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seed derived from an ordered tuple of integers, e.g. (seed, step, sample, stream).
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ull;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

inline Rng derive_rng(std::initializer_list<std::uint64_t> parts) { return Rng(derive_seed(parts)); }

}  // namespace kgbilm
