#include "irgsfda/contrastive/contrastive.hpp"

#include <cmath>
#include <string>

#include "irgsfda/numerics/random.hpp"

namespace irgsfda::contrastive {

namespace ops = numerics;

ProjectionHead ProjectionHead::init(std::size_t dim, std::uint64_t seed) {
    numerics::Rng rng(numerics::mix_seed(seed, 0xc0a7));
    const double s = std::pow(static_cast<double>(dim), -0.25);
    ProjectionHead h{numerics::random_normal({dim, dim}, rng, 0.01), numerics::random_normal({dim, dim}, rng, 0.01)};
    for (std::size_t i = 0; i < dim; ++i) {
        h.w_k.at(i, i) += s;
        h.w_q.at(i, i) += s;
    }
    h.w_k.requires_grad = h.w_q.requires_grad = true;
    return h;
}

const std::vector<std::string>& ProjectionHead::names() {
    static const std::vector<std::string> n{"w_k", "w_q"};
    return n;
}

BoundHead bind(Tape& tape, ProjectionHead& head) {
    return {tape.bind(head.w_k), tape.bind(head.w_q)};
}

KeysQueries project(const BoundHead& head, Var rois) {
    // rows are instances, so W v_i becomes V W^T
    return {ops::matmul_nt(rois, head.w_k), ops::matmul_nt(rois, head.w_q)};
}

Var pairwise_logits(Var queries, Var keys) {
    if (queries.shape() != keys.shape())
        throw numerics::DimensionError("pairwise_logits: queries " + numerics::shape_string(queries.shape()) +
                                       " vs keys " + numerics::shape_string(keys.shape()));
    return ops::matmul_nt(queries, keys);
}

Var graph_contrastive_loss(Var logits, const Tensor& labels, const GclOptions& opts) {
    if (logits.value().rank() != 2 || logits.rows() != logits.cols())
        throw numerics::DimensionError("graph_contrastive_loss: logits must be square, got " +
                                       numerics::shape_string(logits.shape()));
    const std::size_t m = logits.rows();
    if (m < 2) throw numerics::ContractError("graph_contrastive_loss: need at least two proposals");
    if (labels.shape() != logits.shape())
        throw numerics::DimensionError("graph_contrastive_loss: labels " + numerics::shape_string(labels.shape()) +
                                       " vs logits " + numerics::shape_string(logits.shape()));
    if (!(opts.temperature > 0.0)) throw numerics::ContractError("graph_contrastive_loss: temperature must be > 0");

    Tensor all_mask({m, m}, 1.0);
    Tensor pos_mask({m, m});
    Tensor anchor_weight({m, 1});
    double log_counts = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        all_mask.at(i, i) = 0.0;
        std::size_t count = 0;
        for (std::size_t j = 0; j < m; ++j)
            if (j != i && labels.at(i, j) != 0.0) {
                pos_mask.at(i, j) = 1.0;
                ++count;
            }
        if (count == 0) continue;
        anchor_weight.at(i, 0) = 1.0;
        log_counts += std::log(static_cast<double>(count));
    }

    Var r = opts.temperature == 1.0 ? logits : ops::scale(logits, 1.0 / opts.temperature);
    Var lse_all = ops::masked_logsumexp_rows(r, all_mask);
    Var lse_pos = ops::masked_logsumexp_rows(r, pos_mask);
    Var per_anchor = ops::sub(ops::weighted_sum(lse_all, anchor_weight), ops::weighted_sum(lse_pos, anchor_weight));
    return ops::add(per_anchor, logits.tape().constant(Tensor::scalar(log_counts)));
}

double gcl_oracle(const Tensor& logits, const Tensor& labels) {
    const std::size_t m = logits.rows();
    if (m < 2) throw numerics::ContractError("gcl_oracle: need at least two proposals");
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::size_t> positives, candidates;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            candidates.push_back(j);
            if (labels.at(i, j) == 1.0) positives.push_back(j);
        }
        if (positives.empty()) continue;
        double denom = 0.0;
        for (std::size_t a : candidates) denom += std::exp(logits.at(i, a));
        double ratio_sum = 0.0;
        for (std::size_t p : positives) ratio_sum += std::exp(logits.at(i, p)) / denom;
        loss += -std::log(ratio_sum / static_cast<double>(positives.size()));
    }
    return loss;
}

Var simclr_loss(Var features, std::span<const std::size_t> partner) {
    const std::size_t n2 = features.rows();
    if (n2 < 4 || n2 % 2 != 0)
        throw numerics::ContractError("simclr_loss: need 2N rows with N >= 2, got " + std::to_string(n2));
    if (partner.size() != n2) throw numerics::ContractError("simclr_loss: partner map must cover every row");
    for (std::size_t i = 0; i < n2; ++i)
        if (partner[i] >= n2 || partner[i] == i || partner[partner[i]] != i)
            throw numerics::ContractError("simclr_loss: partner map must be an involution without fixed points");

    Var z = ops::l2_normalize_rows(features);
    Var sim = ops::matmul_nt(z, z);
    Tensor others({n2, n2}, 1.0);
    Tensor pick({n2, n2});
    for (std::size_t i = 0; i < n2; ++i) {
        others.at(i, i) = 0.0;
        pick.at(i, partner[i]) = 1.0;
    }
    const double inv = 1.0 / static_cast<double>(n2);
    Var lse = ops::masked_logsumexp_rows(sim, others);
    return ops::scale(ops::sub(ops::sum(lse), ops::weighted_sum(sim, pick)), inv);
}

}  // namespace irgsfda::contrastive
