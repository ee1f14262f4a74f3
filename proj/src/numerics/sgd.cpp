#include "irgsfda/numerics/sgd.hpp"

#include <string>

namespace irgsfda::numerics {

void sgd_step(std::span<Tensor* const> params, double lr, double momentum, SgdState& state) {
    for (std::size_t k = 0; k < params.size(); ++k)
        if (!params[k]->grad || params[k]->grad->size() != params[k]->size())
            throw ContractError("sgd_step: parameter " + std::to_string(k) + " has no gradient");

    if (state.velocity.empty()) {
        state.velocity.resize(params.size());
        for (std::size_t k = 0; k < params.size(); ++k) state.velocity[k].assign(params[k]->size(), 0.0);
    }
    if (state.velocity.size() != params.size())
        throw ContractError("sgd_step: optimizer state tracks " + std::to_string(state.velocity.size()) +
                            " parameters, got " + std::to_string(params.size()));

    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        auto& v = state.velocity[k];
        const auto& g = *p.grad;
        auto values = p.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            v[i] = momentum * v[i] + g[i];
            values[i] -= lr * v[i];
        }
        p.grad.reset();
    }
}

}  // namespace irgsfda::numerics
