#pragma once

// Seeding and sampling helpers. std::uniform_int_distribution and
// std::normal_distribution produce implementation-defined streams, so the
// distributions are spelled out here to keep every run bit-reproducible
// from its seed regardless of the standard library.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>

namespace evanchor {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// One global seed fans out into independent streams (per phantom, per
// training step, ...) so partial reruns stay reproducible.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base + 0x9e3779b97f4a7c15ULL * (stream + 1));
}

// Exact uniform draw from [0, n) via rejection sampling.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
    assert(n > 0);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller.
inline double normal_unit(std::mt19937_64& rng) {
    const double u1 = 1.0 - uniform_unit(rng);  // (0, 1]
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace evanchor
