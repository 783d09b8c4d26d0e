#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace dcnn {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seed of a named sub-stream ("synth", "init", "augment", ...) of a run
/// seed, optionally refined by indices such as (epoch, sample).
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view name,
                                    std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a of the stream name
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  std::uint64_t s = splitmix64(seed ^ splitmix64(h));
  for (std::uint64_t i : indices) s = splitmix64(s ^ splitmix64(i + 0x632be59bd9b4e019ull));
  return s;
}

inline Rng make_rng(std::uint64_t seed, std::string_view name, std::initializer_list<std::uint64_t> indices = {}) {
  return Rng(substream_seed(seed, name, indices));
}

}  // namespace dcnn
