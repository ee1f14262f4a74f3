#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "irgsfda/numerics/tensor.hpp"

namespace irgsfda::cli {

enum class Fault {
    None,
    GclSign,  // negate the gradient flowing into the GCL logits
};

struct GradSuiteOptions {
    std::uint64_t seed = 0;
    std::size_t instances = 20;
    double tolerance = 1e-4;
    Fault fault = Fault::None;
};

struct LossCheck {
    std::string loss;    // L_SL, L_GDL, L_GCL, L_SimCLR
    double max_rel_error = 0.0;
    std::string worst;   // input and instance holding the worst coordinate
    std::size_t checked = 0;
    std::size_t excluded = 0;
    bool passed = false;
};

/// Finite-difference checks of every loss on small random instances
/// (m <= 6 proposals, d <= 5 features), one seed per instance.
std::vector<LossCheck> run_grad_suite(const GradSuiteOptions& opts);

struct GraphSample {
    numerics::Tensor edges;   // E, m x m
    numerics::Tensor labels;  // M, m x m
};

/// E and M of a random relation graph over random node features.
GraphSample sample_graph(std::uint64_t seed, std::size_t m, std::size_t d, double epsilon);

/// Row-major CSV with 9 significant digits per value.
void write_matrix_csv(const std::filesystem::path& path, const numerics::Tensor& matrix);

}  // namespace irgsfda::cli
