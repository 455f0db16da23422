#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ptxlink::netemu {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a; stable across builds, used to derive per-domain seeds.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream for `domain` under a scenario seed.
inline Rng make_stream(std::uint64_t seed, std::string_view domain) {
    return Rng{splitmix64(seed ^ fnv1a(domain))};
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace ptxlink::netemu
