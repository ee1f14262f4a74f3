#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "irgsfda/numerics/ops.hpp"

namespace irgsfda::irg {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

/// Learnable inter-proposal relations shared by the student and teacher
/// pipelines. Rows of the feature matrix are proposals (nodes).
struct RelationGraph {
    Tensor f_w;                  // d x d, query-side relation map
    Tensor g_w;                  // d x d, key-side relation map
    std::vector<Tensor> gcn_w;   // one d x d weight per aggregation layer
    double epsilon = 0.125;      // positive-pair threshold on edge weights

    /// f = g = d^{-1/4} I plus small noise, so initial edges follow scaled
    /// dot-product similarity; every GCN weight starts at identity.
    static RelationGraph init(std::size_t dim, double epsilon, std::size_t layers, std::uint64_t seed);

    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
    std::vector<std::string> names() const;
    void validate() const;
};

struct BoundGraph {
    Var f_w, g_w;
    std::vector<Var> gcn_w;
};

BoundGraph bind(Tape& tape, RelationGraph& graph);
BoundGraph bind_frozen(Tape& tape, const RelationGraph& graph);

/// E = softmax_rows((F f)(F g)^T). Requires at least two nodes.
Var compute_edges(const BoundGraph& graph, Var features);

/// F~ = relu(E F W), repeated once per GCN layer with the same E.
Var gcn_forward(const BoundGraph& graph, Var edges, Var features);

struct DistillationTerms {
    Var student_graph;   // KL(s(Z_st) || s(Z~_st))
    Var teacher_graph;   // KL(s(Z_te) || s(Z~_te))
    Var cross_pipeline;  // KL(s(Z_st) || s(Z_te))
    Var total;
};

/// Sum of three row-averaged KL divergences between row-softmaxed logits.
/// Callers pass teacher logits that are already cut from the teacher
/// detector; the relation-graph path inside `graph_teacher` stays live.
DistillationTerms graph_distillation_loss(Var student, Var graph_student, Var teacher, Var graph_teacher);

/// M_ij = 1 iff E_ij >= epsilon. Not differentiable.
Tensor pairwise_labels(const Tensor& edges, double epsilon);

}  // namespace irgsfda::irg
