#pragma once

#include <cstdint>
#include <random>

namespace rrag {

// Portable draws on top of mt19937_64; std::uniform_*_distribution output is
// implementation-defined, which would break cross-toolchain reproducibility.

inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline uint64_t uniform_index(std::mt19937_64& rng, uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % n;
}

} // namespace rrag
