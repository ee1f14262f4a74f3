#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "irgsfda/numerics/ops.hpp"

namespace irgsfda::contrastive {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

/// Key and query projections of RoI features, bias-free.
struct ProjectionHead {
    Tensor w_k;  // d x d
    Tensor w_q;  // d x d

    static ProjectionHead init(std::size_t dim, std::uint64_t seed);
    std::vector<Tensor*> tensors() { return {&w_k, &w_q}; }
    std::vector<const Tensor*> tensors() const { return {&w_k, &w_q}; }
    static const std::vector<std::string>& names();
};

struct BoundHead {
    Var w_k, w_q;
};

BoundHead bind(Tape& tape, ProjectionHead& head);

struct KeysQueries {
    Var keys;     // k_i = W_k v_i, stacked as rows
    Var queries;  // q_i = W_q v_i
};

KeysQueries project(const BoundHead& head, Var rois);

/// R_ij = q_i . k_j
Var pairwise_logits(Var queries, Var keys);

struct GclOptions {
    /// Logits are divided by this before exponentiation; 1 reproduces the
    /// raw form.
    double temperature = 1.0;
};

/// Sum over anchors i with non-empty P(i) of
///   -log( (1/|P(i)|) sum_{p in P(i)} exp(R_ip) / sum_{a != i} exp(R_ia) )
/// where P(i) = { j != i : M_ij = 1 }. Evaluated with per-row log-sum-exp.
Var graph_contrastive_loss(Var logits, const Tensor& labels, const GclOptions& opts = {});

/// Literal set-enumeration evaluation of the same loss with naive
/// exponentials. Reference for tests; valid while |R| stays well below the
/// exp overflow point.
double gcl_oracle(const Tensor& logits, const Tensor& labels);

/// Cosine-similarity NT-Xent averaged over all 2N anchors. `partner[i]` is
/// the index of the other view of sample i.
Var simclr_loss(Var features, std::span<const std::size_t> partner);

}  // namespace irgsfda::contrastive
