#include "irgsfda/irg/relation_graph.hpp"

#include <cmath>

#include "irgsfda/numerics/random.hpp"

namespace irgsfda::irg {

namespace ops = numerics;

RelationGraph RelationGraph::init(std::size_t dim, double epsilon, std::size_t layers, std::uint64_t seed) {
    numerics::Rng rng(numerics::mix_seed(seed, 0x16a9));
    const double s = std::pow(static_cast<double>(dim), -0.25);
    RelationGraph g;
    g.f_w = numerics::random_normal({dim, dim}, rng, 0.01);
    g.g_w = numerics::random_normal({dim, dim}, rng, 0.01);
    for (std::size_t i = 0; i < dim; ++i) {
        g.f_w.at(i, i) += s;
        g.g_w.at(i, i) += s;
    }
    for (std::size_t l = 0; l < layers; ++l) g.gcn_w.push_back(Tensor::identity(dim));
    g.epsilon = epsilon;
    for (Tensor* t : g.tensors()) t->requires_grad = true;
    g.validate();
    return g;
}

std::vector<Tensor*> RelationGraph::tensors() {
    std::vector<Tensor*> out{&f_w, &g_w};
    for (Tensor& w : gcn_w) out.push_back(&w);
    return out;
}

std::vector<const Tensor*> RelationGraph::tensors() const {
    std::vector<const Tensor*> out{&f_w, &g_w};
    for (const Tensor& w : gcn_w) out.push_back(&w);
    return out;
}

std::vector<std::string> RelationGraph::names() const {
    std::vector<std::string> out{"f_w", "g_w"};
    for (std::size_t l = 0; l < gcn_w.size(); ++l) out.push_back("gcn_w" + std::to_string(l));
    return out;
}

void RelationGraph::validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw numerics::ContractError("relation graph epsilon must lie strictly between 0 and 1");
    if (gcn_w.empty()) throw numerics::ContractError("relation graph needs at least one GCN layer");
    for (const Tensor* t : tensors())
        if (!t->all_finite()) throw numerics::ContractError("relation graph weights must be finite");
}

BoundGraph bind(Tape& tape, RelationGraph& graph) {
    BoundGraph b{tape.bind(graph.f_w), tape.bind(graph.g_w), {}};
    for (Tensor& w : graph.gcn_w) b.gcn_w.push_back(tape.bind(w));
    return b;
}

BoundGraph bind_frozen(Tape& tape, const RelationGraph& graph) {
    BoundGraph b{tape.constant(graph.f_w), tape.constant(graph.g_w), {}};
    for (const Tensor& w : graph.gcn_w) b.gcn_w.push_back(tape.constant(w));
    return b;
}

Var compute_edges(const BoundGraph& graph, Var features) {
    if (features.value().rank() != 2 || features.rows() < 2)
        throw numerics::ContractError("compute_edges: need at least two nodes, got " +
                                      numerics::shape_string(features.shape()));
    Var queries = ops::matmul(features, graph.f_w);
    Var keys = ops::matmul(features, graph.g_w);
    return ops::softmax_rows(ops::matmul_nt(queries, keys));
}

Var gcn_forward(const BoundGraph& graph, Var edges, Var features) {
    if (edges.rows() != features.rows() || edges.cols() != features.rows())
        throw numerics::DimensionError("gcn_forward: edge matrix " + numerics::shape_string(edges.shape()) +
                                       " does not match " + numerics::shape_string(features.shape()));
    Var h = features;
    for (const Var& w : graph.gcn_w) h = ops::relu(ops::matmul(ops::matmul(edges, h), w));
    return h;
}

DistillationTerms graph_distillation_loss(Var student, Var graph_student, Var teacher, Var graph_teacher) {
    const auto& s = student.shape();
    if (graph_student.shape() != s || teacher.shape() != s || graph_teacher.shape() != s)
        throw numerics::DimensionError("graph_distillation_loss: logit shapes differ");
    Var ps = ops::softmax_rows(student);
    Var pt = ops::softmax_rows(teacher);
    DistillationTerms t;
    t.student_graph = ops::kl_divergence_rows(ps, ops::softmax_rows(graph_student));
    t.teacher_graph = ops::kl_divergence_rows(pt, ops::softmax_rows(graph_teacher));
    t.cross_pipeline = ops::kl_divergence_rows(ps, pt);
    t.total = ops::add(ops::add(t.student_graph, t.teacher_graph), t.cross_pipeline);
    return t;
}

Tensor pairwise_labels(const Tensor& edges, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw numerics::ContractError("pairwise_labels: epsilon must lie strictly between 0 and 1");
    Tensor m(edges.shape());
    for (std::size_t i = 0; i < edges.size(); ++i) m[i] = edges[i] >= epsilon ? 1.0 : 0.0;
    return m;
}

}  // namespace irgsfda::irg
