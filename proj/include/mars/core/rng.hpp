#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mars {

using Rng = std::mt19937_64;

/// Uniform draw in [0, 1) from the top 53 bits of one engine output.
/// Used instead of std::uniform_real_distribution so Bernoulli draws are
/// identical across standard library implementations.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// FNV-1a, used to turn string identifiers into stream keys.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent random stream for (master seed, key, salt). Every search run
/// derives its stream this way so results do not depend on scheduling.
inline Rng derive_stream(std::uint64_t master_seed, std::string_view key, std::uint64_t salt = 0) {
    const std::uint64_t k = fnv1a(key);
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return Rng(seq);
}

}  // namespace mars
