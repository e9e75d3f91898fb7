#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sparsemask {

using Engine = std::mt19937_64;

/// Seed plus stream id; together they fix every stochastic choice of a run.
struct SamplerSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  bool operator==(const SamplerSeed&) const = default;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

inline Engine make_engine(const SamplerSeed& s) {
  std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                    static_cast<std::uint32_t>(s.stream), static_cast<std::uint32_t>(s.stream >> 32)};
  return Engine(seq);
}

/// Child seed for a named sub-component (e.g. "synth", "rnd") of a run.
inline SamplerSeed derive(const SamplerSeed& parent, std::string_view tag) {
  return {parent.seed, detail::splitmix64(parent.stream ^ detail::fnv1a(tag))};
}

/// Child seed for the i-th item of a batch (harness pairs, repeated runs).
inline SamplerSeed derive(const SamplerSeed& parent, std::uint64_t index) {
  return {detail::splitmix64(parent.seed + detail::splitmix64(index + 1)), parent.stream};
}

}  // namespace sparsemask
