#pragma once

#include <cstdint>
#include <random>

namespace lsf {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Seed of the index-th independent stream under `base`: base XOR hash(index).
constexpr std::uint64_t split_seed(std::uint64_t base, std::uint64_t index) noexcept { return base ^ mix64(index); }

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

} // namespace lsf
