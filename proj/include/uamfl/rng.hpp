#pragma once

#include <cstdint>
#include <random>

namespace uamfl {

using Rng = std::mt19937_64;

/// Independent substreams. Every random quantity in the library is drawn from
/// a generator keyed by (seed, stream, index) so results never depend on the
/// order in which unrelated components consume randomness.
enum class Stream : std::uint64_t {
    Realization = 1,
    Fading = 2,
    ServingLink = 3,
    Participants = 4,
    Burgers = 5,
    FnoInit = 6,
    Staleness = 7,
    Training = 8,
    Toy = 9,
    Laplace = 10,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace uamfl
