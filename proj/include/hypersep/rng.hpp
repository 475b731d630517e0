#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace hypersep {

using rng_engine = std::mt19937_64;

/// Uniform integer in [0, bound) by rejection sampling on raw engine output.
/// std::uniform_int_distribution is implementation-defined, which would break
/// the byte-identical-output guarantee across standard libraries.
inline std::uint64_t random_below(rng_engine& gen, std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw;
    do {
        draw = gen();
    } while (draw >= limit);
    return draw % bound;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double random_unit(rng_engine& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double random_range(rng_engine& gen, double lo, double hi) {
    return lo + (hi - lo) * random_unit(gen);
}

/// Magnitude in [lo, hi], sign chosen by a fair coin.
inline double random_signed_magnitude(rng_engine& gen, double lo, double hi) {
    const double mag = random_range(gen, lo, hi);
    return (gen() & 1u) ? mag : -mag;
}

template <class T>
inline void shuffle_in_place(std::vector<T>& items, rng_engine& gen) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(random_below(gen, i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace hypersep
