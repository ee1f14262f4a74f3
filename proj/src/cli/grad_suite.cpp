#include "irgsfda/cli/grad_suite.hpp"

#include <cstdio>
#include <fstream>

#include "irgsfda/contrastive/contrastive.hpp"
#include "irgsfda/irg/relation_graph.hpp"
#include "irgsfda/numerics/gradcheck.hpp"
#include "irgsfda/numerics/random.hpp"
#include "irgsfda/numerics/tensor_io.hpp"
#include "irgsfda/toydet/detector.hpp"

namespace irgsfda::cli {

using numerics::Rng;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;
namespace ops = numerics;

namespace {

struct Accumulator {
    LossCheck check;

    void add(const numerics::GradCheckReport& r, const std::string& where) {
        check.checked += r.checked;
        check.excluded += r.excluded;
        if (r.checked > 0 && (check.worst.empty() || r.max_rel_error > check.max_rel_error)) {
            check.max_rel_error = r.max_rel_error;
            check.worst = where + "[" + std::to_string(r.worst_index) + "]";
        }
    }
};

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

toydet::Box jittered(const toydet::Box& b, Rng& rng, double amount) {
    std::uniform_real_distribution<double> u(-amount, amount);
    toydet::Box out{b.x1 + u(rng), b.y1 + u(rng), b.x2 + u(rng), b.y2 + u(rng)};
    return toydet::clip(out, static_cast<double>(toydet::kImageSize));
}

// Detector loss as a function of each of its four head outputs.
void check_sl(Accumulator& acc, std::uint64_t seed) {
    Rng rng(numerics::mix_seed(seed, 0x51));
    const std::size_t m = pick(rng, 2, 6);
    const std::size_t n_gt = pick(rng, 1, 2);
    std::uniform_real_distribution<double> pos(4.0, 40.0), side(12.0, 20.0);
    std::vector<toydet::BoxLabel> labels;
    for (std::size_t g = 0; g < n_gt; ++g) {
        const double x = pos(rng), y = pos(rng), s = side(rng);
        labels.push_back({{x, y, x + s, y + s}, static_cast<int>(pick(rng, 0, toydet::kNumClasses - 1))});
    }
    std::vector<toydet::Box> proposals;
    for (std::size_t i = 0; i < m; ++i)
        proposals.push_back(i % 2 == 0 ? jittered(labels[i / 2 % n_gt].box, rng, 2.0)
                                       : jittered(toydet::Box{30, 30, 50, 50}, rng, 10.0));

    const Tensor obj = numerics::random_normal({toydet::kNumCells, toydet::kNumScales}, rng, 1.0);
    const Tensor rpn_d = numerics::random_normal({toydet::kNumCells, 4 * toydet::kNumScales}, rng, 0.5);
    const Tensor logits = numerics::random_normal({m, toydet::kNumClasses + 1}, rng, 1.0);
    const Tensor deltas = numerics::random_normal({m, 4}, rng, 0.5);

    auto loss = [&](int which) {
        return [&, which](Tape& tape, Var x) {
            toydet::RpnOutput rpn{which == 0 ? x : tape.constant(obj), which == 1 ? x : tape.constant(rpn_d)};
            toydet::RoiOutput roi{which == 2 ? x : tape.constant(logits), which == 3 ? x : tape.constant(deltas)};
            return toydet::detection_loss(rpn, proposals, roi, labels).total;
        };
    };
    const std::string tag = "seed" + std::to_string(seed) + ":";
    acc.add(numerics::finite_diff_check(loss(0), obj), tag + "rpn_objectness");
    acc.add(numerics::finite_diff_check(loss(1), rpn_d), tag + "rpn_deltas");
    acc.add(numerics::finite_diff_check(loss(2), logits), tag + "roi_logits");
    acc.add(numerics::finite_diff_check(loss(3), deltas), tag + "roi_deltas");
}

struct GraphInstance {
    std::size_t m = 0, d = 0;
    Tensor f_st, f_te;      // m x d node features
    Tensor f_w, g_w, gcn_w; // d x d
    Tensor cls_st, cls_te;  // d x (K + 1)
};

GraphInstance graph_instance(std::uint64_t seed) {
    Rng rng(numerics::mix_seed(seed, 0x9d1));
    GraphInstance g;
    g.m = pick(rng, 2, 6);
    g.d = pick(rng, 2, 5);
    const std::size_t k = toydet::kNumClasses + 1;
    g.f_st = numerics::random_normal({g.m, g.d}, rng, 1.0);
    g.f_te = numerics::random_normal({g.m, g.d}, rng, 1.0);
    g.f_w = numerics::random_normal({g.d, g.d}, rng, 0.6);
    g.g_w = numerics::random_normal({g.d, g.d}, rng, 0.6);
    g.gcn_w = numerics::random_normal({g.d, g.d}, rng, 0.6);
    g.cls_st = numerics::random_normal({g.d, k}, rng, 0.8);
    g.cls_te = numerics::random_normal({g.d, k}, rng, 0.8);
    return g;
}

// Distillation loss through the relation graph, per input tensor.
void check_gdl(Accumulator& acc, std::uint64_t seed) {
    const GraphInstance g = graph_instance(seed);
    enum Input { FeatSt, Fw, Gw, GcnW, ClsSt, kInputs };
    const Tensor* inputs[kInputs] = {&g.f_st, &g.f_w, &g.g_w, &g.gcn_w, &g.cls_st};
    const char* names[kInputs] = {"student_features", "f_w", "g_w", "gcn_w", "student_cls"};
    for (int which = 0; which < kInputs; ++which) {
        auto fn = [&, which](Tape& tape, Var x) {
            auto in = [&](int id) { return which == id ? x : tape.constant(*inputs[id]); };
            irg::BoundGraph graph{in(Fw), in(Gw), {in(GcnW)}};
            Var f_st = in(FeatSt);
            Var f_te = tape.constant(g.f_te);
            Var cls_st = in(ClsSt);
            Var cls_te = tape.constant(g.cls_te);
            Var z_st = ops::matmul(f_st, cls_st);
            Var z_st_graph = ops::matmul(irg::gcn_forward(graph, irg::compute_edges(graph, f_st), f_st), cls_st);
            Var z_te = ops::matmul(f_te, cls_te);
            Var z_te_graph = ops::matmul(irg::gcn_forward(graph, irg::compute_edges(graph, f_te), f_te), cls_te);
            return irg::graph_distillation_loss(z_st, z_st_graph, z_te, z_te_graph).total;
        };
        acc.add(numerics::finite_diff_check(fn, *inputs[which]),
                "seed" + std::to_string(seed) + ":" + names[which]);
    }
}

Tensor random_labels(Rng& rng, std::size_t m) {
    Tensor labels({m, m});
    std::bernoulli_distribution coin(0.4);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) labels.at(i, j) = (i == j || coin(rng)) ? 1.0 : 0.0;
    return labels;
}

// Contrastive loss on projected student features, per input tensor.
void check_gcl(Accumulator& acc, std::uint64_t seed, Fault fault) {
    Rng rng(numerics::mix_seed(seed, 0x6c1));
    const std::size_t m = pick(rng, 2, 6), d = pick(rng, 2, 5);
    const Tensor v = numerics::random_normal({m, d}, rng, 1.0);
    const Tensor wk = numerics::random_normal({d, d}, rng, 0.6);
    const Tensor wq = numerics::random_normal({d, d}, rng, 0.6);
    const Tensor labels = random_labels(rng, m);
    const Tensor* inputs[3] = {&v, &wk, &wq};
    const char* names[3] = {"features", "w_k", "w_q"};
    for (int which = 0; which < 3; ++which) {
        auto fn = [&, which](Tape& tape, Var x) {
            auto in = [&](int id) { return which == id ? x : tape.constant(*inputs[id]); };
            contrastive::BoundHead head{in(1), in(2)};
            contrastive::KeysQueries kq = contrastive::project(head, in(0));
            Var r = contrastive::pairwise_logits(kq.queries, kq.keys);
            if (fault == Fault::GclSign) r = ops::scale_gradient(r, -1.0);
            return contrastive::graph_contrastive_loss(r, labels);
        };
        acc.add(numerics::finite_diff_check(fn, *inputs[which]),
                "seed" + std::to_string(seed) + ":" + names[which]);
    }
}

void check_simclr(Accumulator& acc, std::uint64_t seed) {
    Rng rng(numerics::mix_seed(seed, 0x5c1));
    const std::size_t n = pick(rng, 2, 3), d = pick(rng, 2, 5);
    const Tensor z = numerics::random_normal({2 * n, d}, rng, 1.0);
    std::vector<std::size_t> partner(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        partner[i] = i + n;
        partner[i + n] = i;
    }
    auto fn = [&](Tape&, Var x) { return contrastive::simclr_loss(x, partner); };
    acc.add(numerics::finite_diff_check(fn, z), "seed" + std::to_string(seed) + ":features");
}

}  // namespace

std::vector<LossCheck> run_grad_suite(const GradSuiteOptions& opts) {
    Accumulator sl, gdl, gcl, simclr;
    sl.check.loss = "L_SL";
    gdl.check.loss = "L_GDL";
    gcl.check.loss = "L_GCL";
    simclr.check.loss = "L_SimCLR";
    for (std::size_t i = 0; i < opts.instances; ++i) {
        const std::uint64_t seed = numerics::mix_seed(opts.seed, i);
        check_sl(sl, seed);
        check_gdl(gdl, seed);
        check_gcl(gcl, seed, opts.fault);
        check_simclr(simclr, seed);
    }
    std::vector<LossCheck> out{sl.check, gdl.check, gcl.check, simclr.check};
    for (auto& c : out) c.passed = c.checked > 0 && c.max_rel_error < opts.tolerance;
    return out;
}

GraphSample sample_graph(std::uint64_t seed, std::size_t m, std::size_t d, double epsilon) {
    Rng rng(numerics::mix_seed(seed, 0xd0));
    Tape tape;
    const Tensor f = numerics::random_normal({m, d}, rng, 1.0);
    irg::RelationGraph graph = irg::RelationGraph::init(d, epsilon, 1, seed);
    irg::BoundGraph bound = irg::bind_frozen(tape, graph);
    const Tensor edges = irg::compute_edges(bound, tape.constant(f)).value();
    return {edges, irg::pairwise_labels(edges, epsilon)};
}

void write_matrix_csv(const std::filesystem::path& path, const Tensor& matrix) {
    if (matrix.rank() != 2) throw numerics::DimensionError("write_matrix_csv: expected a matrix");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw numerics::FormatError("cannot write " + path.string());
    char buf[32];
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        for (std::size_t c = 0; c < matrix.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.9g", matrix.at(r, c));
            out << (c ? "," : "") << buf;
        }
        out << '\n';
    }
}

}  // namespace irgsfda::cli
