#include "irgsfda/numerics/kernels.hpp"

#include <string>

#include "irgsfda/numerics/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace irgsfda::kernels {

namespace {

struct GemmDims {
    std::size_t p, q, r;
};

GemmDims check_dims(const MatView& a, Trans ta, const MatView& b, Trans tb, std::size_t out_size) {
    const std::size_t ap = ta == Trans::No ? a.rows : a.cols;
    const std::size_t aq = ta == Trans::No ? a.cols : a.rows;
    const std::size_t bq = tb == Trans::No ? b.rows : b.cols;
    const std::size_t br = tb == Trans::No ? b.cols : b.rows;
    if (aq != bq || a.data.size() != a.rows * a.cols || b.data.size() != b.rows * b.cols)
        throw numerics::DimensionError(
            "gemm: cannot multiply " + std::to_string(ap) + "x" + std::to_string(aq) + " by " +
            std::to_string(bq) + "x" + std::to_string(br));
    if (out_size != ap * br)
        throw numerics::DimensionError("gemm: output buffer holds " + std::to_string(out_size) +
                                       " values, expected " + std::to_string(ap * br));
    return {ap, aq, br};
}

// Computes output rows [row_begin, row_end). Shared by both flavours so the
// per-element accumulation order is identical.
inline void gemm_rows(const MatView& a, Trans ta, const MatView& b, Trans tb, std::span<double> out,
                      GemmDims d, std::size_t row_begin, std::size_t row_end) {
    const double* A = a.data.data();
    const double* B = b.data.data();
    double* C = out.data();
    for (std::size_t i = row_begin; i < row_end; ++i) {
        double* crow = C + i * d.r;
        for (std::size_t k = 0; k < d.q; ++k) {
            const double aik = ta == Trans::No ? A[i * a.cols + k] : A[k * a.cols + i];
            if (aik == 0.0) continue;
            if (tb == Trans::No) {
                const double* brow = B + k * b.cols;
                for (std::size_t j = 0; j < d.r; ++j) crow[j] += aik * brow[j];
            } else {
                for (std::size_t j = 0; j < d.r; ++j) crow[j] += aik * B[j * b.cols + k];
            }
        }
    }
}

}  // namespace

namespace serial {
void gemm_accumulate(MatView a, Trans ta, MatView b, Trans tb, std::span<double> out) {
    const GemmDims d = check_dims(a, ta, b, tb, out.size());
    gemm_rows(a, ta, b, tb, out, d, 0, d.p);
}
}  // namespace serial

namespace parallel {
void gemm_accumulate(MatView a, Trans ta, MatView b, Trans tb, std::span<double> out) {
    const GemmDims d = check_dims(a, ta, b, tb, out.size());
    const auto rows = static_cast<long long>(d.p);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < rows; ++i) {
        gemm_rows(a, ta, b, tb, out, d, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
    }
}
}  // namespace parallel

void gemm_accumulate(MatView a, Trans ta, MatView b, Trans tb, std::span<double> out) {
    const std::size_t work = a.rows * a.cols * (tb == Trans::No ? b.cols : b.rows);
    if (max_threads() > 1 && work >= kParallelGemmThreshold)
        parallel::gemm_accumulate(a, ta, b, tb, out);
    else
        serial::gemm_accumulate(a, ta, b, tb, out);
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace irgsfda::kernels
