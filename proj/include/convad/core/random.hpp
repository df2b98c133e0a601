#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace convad {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stable across platforms, unlike std::hash.
inline constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derives an independent stream seed from a base seed and any number of keys.
template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t base, Keys... keys) {
    std::uint64_t h = splitmix64(base);
    ((h = splitmix64(h ^ static_cast<std::uint64_t>(keys))), ...);
    return h;
}

/// Uniform double in [0,1) from a hash, for stateless noise.
inline constexpr double hash_unit(std::uint64_t h) { return static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace convad
