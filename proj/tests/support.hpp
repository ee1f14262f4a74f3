#pragma once
// Small helpers shared by the unit tests: seeded generators and tensor
// comparisons.

#include <cmath>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "irgsfda/numerics/random.hpp"
#include "irgsfda/numerics/tensor.hpp"

namespace irgsfda::testing {

using numerics::Rng;
using numerics::Tensor;

inline std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Random probability rows, every entry strictly positive.
inline Tensor random_distribution_rows(Rng& rng, std::size_t m, std::size_t n) {
    Tensor t({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (t.at(i, j) = uniform_real(rng, 0.01, 1.0));
        for (std::size_t j = 0; j < n; ++j) t.at(i, j) /= z;
    }
    return t;
}

/// Random 0/1 matrix with the given density.
inline Tensor random_mask(Rng& rng, std::size_t m, std::size_t n, double density) {
    Tensor t({m, n});
    std::bernoulli_distribution coin(density);
    for (double& v : t.values()) v = coin(rng) ? 1.0 : 0.0;
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

/// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("irgsfda-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace irgsfda::testing
