#pragma once

#include <cstddef>
#include <functional>

#include "irgsfda/numerics/tape.hpp"

namespace irgsfda::numerics {

/// Builds a scalar loss from a single input on the given tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    /// Coordinates skipped because a kink lies within one step of them.
    std::size_t excluded = 0;
};

/// Compares the tape gradient of `f` at `x` with central differences.
///
/// Per coordinate the error is |analytic - central| / max(1e-8, |central|).
/// A coordinate is excluded when its one-sided slopes disagree by more than
/// `kink_tolerance * max(1, |central|)`, i.e. a relu/max kink sits within
/// `step` of it and the central difference is meaningless there.
GradCheckReport finite_diff_check(const ScalarFn& f, const Tensor& x, double step = 1e-5,
                                  double kink_tolerance = 1e-2);

}  // namespace irgsfda::numerics
