#pragma once

// Differentiable primitives over Var. Matrix operands are rank-2; no
// implicit broadcasting beyond the row-bias form of `add_row_bias`.

#include "irgsfda/numerics/tape.hpp"

namespace irgsfda::numerics {

/// Floor applied to every probability before a log.
inline constexpr double kLogFloor = 1e-12;

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// a (m x n) + bias (n or 1 x n) broadcast over rows.
Var add_row_bias(Var a, Var bias);

Var matmul(Var a, Var b);
/// a * b^T without materialising the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var relu(Var x);
Var sigmoid(Var x);
/// log(1 + exp(x)), stable for large |x|.
Var softplus(Var x);
/// Elementwise Huber with unit transition point.
Var smooth_l1(Var x);

Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
/// Rows scaled to unit L2 norm; zero rows are a contract violation.
Var l2_normalize_rows(Var x);

Var sum(Var x);
Var mean(Var x);
/// sum_i w_i x_i with constant weights of identical shape.
Var weighted_sum(Var x, const Tensor& weights);

/// Row-averaged KL(p || q). Rows of both operands must be probability
/// vectors within 1e-6. Zero entries of p contribute nothing; q is floored
/// at kLogFloor.
Var kl_divergence_rows(Var p, Var q);

/// Per-row log-sum-exp over entries where mask != 0, as an m x 1 column.
/// Rows with an empty mask yield 0 and receive no gradient.
Var masked_logsumexp_rows(Var x, const Tensor& mask);

/// Copy of the value with no path back to `x`.
Var detach(Var x);
/// Identity forward; multiplies the incoming gradient by `factor`.
Var scale_gradient(Var x, double factor);

}  // namespace irgsfda::numerics
