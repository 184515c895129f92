#pragma once

#include <cstdint>
#include <random>

#include "madgnn/tensor.hpp"

namespace madgnn {

using Rng = std::mt19937_64;

inline double randn(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix randn_matrix(std::size_t r, std::size_t c, double stddev, Rng& rng) {
    Matrix m(r, c);
    for (auto& v : m.data()) v = stddev * randn(rng);
    return m;
}

inline Matrix uniform_matrix(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
    Matrix m(r, c);
    for (auto& v : m.data()) v = uniform(rng, lo, hi);
    return m;
}

// Derives an independent stream id from a base seed and a tag.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace madgnn
