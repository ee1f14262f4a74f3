#pragma once

// Dense matrix kernels. Every kernel exists in two flavours: `serial` is the
// reference implementation used by tests, `parallel` splits the output rows
// across OpenMP threads. Both evaluate each output element with the same
// summation order, so their results are bitwise identical.

#include <cstddef>
#include <span>

namespace irgsfda::kernels {

enum class Trans { No, Yes };

/// Row-major operand view: `data` holds a rows x cols matrix.
struct MatView {
    std::span<const double> data;
    std::size_t rows;
    std::size_t cols;
};

/// out (p x r) += op(a) * op(b), where op transposes when requested.
namespace serial {
void gemm_accumulate(MatView a, Trans ta, MatView b, Trans tb, std::span<double> out);
}

namespace parallel {
void gemm_accumulate(MatView a, Trans ta, MatView b, Trans tb, std::span<double> out);
}

/// Dispatches to the parallel kernel above a work threshold, serial below it.
void gemm_accumulate(MatView a, Trans ta, MatView b, Trans tb, std::span<double> out);

/// Number of multiply-adds below which `gemm_accumulate` stays serial.
inline constexpr std::size_t kParallelGemmThreshold = 1u << 15;

int max_threads();

}  // namespace irgsfda::kernels
