#pragma once

#include <cstdint>
#include <random>

#include "irgsfda/numerics/tensor.hpp"

namespace irgsfda::numerics {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; decorrelates structured seeds such as (base, index).
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
    return mix_seed(mix_seed(a) ^ (b + 0x632be59bd9b4e019ULL));
}

inline Tensor random_normal(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

inline Tensor random_uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

}  // namespace irgsfda::numerics
