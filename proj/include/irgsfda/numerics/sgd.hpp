#pragma once

#include <span>
#include <vector>

#include "irgsfda/numerics/tensor.hpp"

namespace irgsfda::numerics {

/// Velocity buffers for momentum SGD, one per parameter, in call order.
struct SgdState {
    std::vector<std::vector<double>> velocity;
};

/// v <- momentum * v + grad; param <- param - lr * v; grads cleared.
/// Every parameter must carry a gradient.
void sgd_step(std::span<Tensor* const> params, double lr, double momentum, SgdState& state);

}  // namespace irgsfda::numerics
