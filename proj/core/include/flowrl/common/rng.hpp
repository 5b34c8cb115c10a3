#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace flowrl {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// (run seed, counter...) tuple so that every trajectory owns a private
/// generator whose state does not depend on evaluation order.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> counters) noexcept {
  std::uint64_t s = splitmix64(seed);
  for (auto c : counters) s = splitmix64(s ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return s;
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> counters = {}) {
  return Engine(derive_seed(seed, counters));
}

}  // namespace flowrl
