#include <cmath>

#include "doctest.h"
#include "irgsfda/irg/relation_graph.hpp"
#include "irgsfda/numerics/gradcheck.hpp"
#include "irgsfda/toydet/detector.hpp"
#include "support.hpp"

using namespace irgsfda;
using namespace irgsfda::irg;
using numerics::ContractError;
using numerics::Rng;

namespace {

RelationGraph identity_graph(std::size_t d) {
    RelationGraph g = RelationGraph::init(d, 0.25, 1, 0);
    g.f_w = Tensor::identity(d);
    g.g_w = Tensor::identity(d);
    g.gcn_w[0] = Tensor::identity(d);
    return g;
}

// Independent row-softmax KL for one row pair.
double kl_row(const std::vector<double>& zp, const std::vector<double>& zq) {
    const auto soft = [](const std::vector<double>& z) {
        double s = 0.0;
        std::vector<double> p(z.size());
        for (std::size_t j = 0; j < z.size(); ++j) s += (p[j] = std::exp(z[j]));
        for (double& v : p) v /= s;
        return p;
    };
    const auto p = soft(zp), q = soft(zq);
    double kl = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) kl += p[j] * std::log(p[j] / q[j]);
    return kl;
}

}  // namespace

TEST_SUITE("irg") {

TEST_CASE("identical rows give uniform edges") {
    const RelationGraph g = RelationGraph::init(4, 0.25, 1, 3);
    Tape tape;
    const Tensor f({5, 4}, std::vector<double>(20, 0.7));
    const Tensor e = compute_edges(bind_frozen(tape, g), tape.constant(f)).value();
    for (double v : e.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("identity maps on I2 give softmax([1, 0]) rows") {
    const RelationGraph g = identity_graph(2);
    Tape tape;
    const Tensor e = compute_edges(bind_frozen(tape, g), tape.constant(Tensor::identity(2))).value();
    const double hi = std::exp(1.0) / (std::exp(1.0) + 1.0);
    CHECK(e.at(0, 0) == doctest::Approx(hi).epsilon(1e-14));
    CHECK(e.at(0, 1) == doctest::Approx(1.0 - hi).epsilon(1e-14));
    CHECK(e.at(1, 1) == doctest::Approx(hi).epsilon(1e-14));
    CHECK(e.at(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("compute_edges rejects a single node") {
    const RelationGraph g = RelationGraph::init(3, 0.25, 1, 3);
    Tape tape;
    CHECK_THROWS_AS(compute_edges(bind_frozen(tape, g), tape.constant(Tensor({1, 3}))), ContractError);
}

// Entries are strictly inside (0, 1) until a logit gap exceeds about 37,
// where 1 - e^-gap rounds to 1 in double precision; larger inputs are
// checked on the closed interval.
TEST_CASE("edge matrices are row-stochastic with entries in (0, 1)") {
    Rng rng(40);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = testing::uniform_size(rng, 2, 12), d = testing::uniform_size(rng, 1, 8);
        const RelationGraph g = RelationGraph::init(d, 0.25, 1, trial);
        const bool moderate = trial < 100;
        const double scale = moderate ? testing::uniform_real(rng, 0.01, 1.0) : testing::uniform_real(rng, 1.0, 30.0);
        Tape tape;
        const Tensor e =
            compute_edges(bind_frozen(tape, g), tape.constant(numerics::random_normal({m, d}, rng, scale))).value();
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (moderate) {
                    CHECK(e.at(i, j) > 0.0);
                    CHECK(e.at(i, j) < 1.0);
                } else {
                    CHECK(e.at(i, j) >= 0.0);
                    CHECK(e.at(i, j) <= 1.0);
                }
                s += e.at(i, j);
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("gcn_forward identity and mean-field cases") {
    const RelationGraph g = identity_graph(3);
    Rng rng(41);
    const Tensor f = numerics::random_uniform({4, 3}, rng, 0.0, 2.0);
    Tape tape;
    const BoundGraph bg = bind_frozen(tape, g);
    CHECK(gcn_forward(bg, tape.constant(Tensor::identity(4)), tape.constant(f)).value() == f);

    const Tensor uniform({4, 4}, 0.25);
    const Tensor out = gcn_forward(bg, tape.constant(uniform), tape.constant(f)).value();
    for (std::size_t i = 1; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(out.at(i, j) == doctest::Approx(out.at(0, j)).epsilon(1e-14));
}

TEST_CASE("graph_distillation_loss examples") {
    Tape tape;
    Rng rng(42);
    const Var z = tape.constant(numerics::random_normal({4, 4}, rng));
    CHECK(graph_distillation_loss(z, z, z, z).total.item() == 0.0);

    const Var st = tape.constant(Tensor::matrix({{0.0, 0.0}}));
    const Var te = tape.constant(Tensor::matrix({{std::log(1.0), std::log(3.0)}}));
    const DistillationTerms t = graph_distillation_loss(st, st, te, te);
    CHECK(t.student_graph.item() == 0.0);
    CHECK(t.teacher_graph.item() == 0.0);
    const double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
    CHECK(t.cross_pipeline.item() == doctest::Approx(expected).epsilon(1e-14));
    CHECK(t.cross_pipeline.item() == doctest::Approx(0.1438).epsilon(1e-3));
    // 0.1308 is the same pair in the opposite order, KL([.25, .75] || [.5, .5])
    const DistillationTerms rev = graph_distillation_loss(te, te, st, st);
    CHECK(rev.cross_pipeline.item() == doctest::Approx(0.1308).epsilon(1e-3));
    CHECK(t.total.item() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("graph_distillation_loss matches a row-by-row KL oracle") {
    Rng rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = testing::uniform_size(rng, 1, 6), k = testing::uniform_size(rng, 2, 5);
        std::array<Tensor, 4> z;
        for (auto& t : z) t = numerics::random_normal({m, k}, rng, 2.0);
        Tape tape;
        const DistillationTerms terms = graph_distillation_loss(tape.constant(z[0]), tape.constant(z[1]),
                                                                tape.constant(z[2]), tape.constant(z[3]));
        double want = 0.0;
        for (auto [p, q] : {std::pair{0, 1}, std::pair{2, 3}, std::pair{0, 2}}) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                std::vector<double> a(k), b(k);
                for (std::size_t j = 0; j < k; ++j) a[j] = z[p].at(i, j), b[j] = z[q].at(i, j);
                acc += kl_row(a, b);
            }
            want += acc / static_cast<double>(m);
        }
        CHECK(terms.total.item() >= 0.0);
        CHECK(terms.total.item() == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("graph_distillation_loss is positive when the pipelines disagree") {
    Rng rng(44);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor a = numerics::random_normal({3, 4}, rng);
        Tensor b = a;
        b.at(testing::uniform_size(rng, 0, 2), testing::uniform_size(rng, 0, 3)) += 0.01;
        Tape tape;
        const Var va = tape.constant(a), vb = tape.constant(b);
        CHECK(graph_distillation_loss(va, va, vb, vb).total.item() > 0.0);
    }
}

TEST_CASE("distillation gradients reach the student and graph but never the teacher") {
    toydet::DetectorParams student = toydet::DetectorParams::init(1);
    toydet::DetectorParams teacher = toydet::DetectorParams::init(2);
    RelationGraph graph = RelationGraph::init(toydet::kFeatureDim, 0.125, 1, 3);
    const auto scene = toydet::generate_scene(toydet::DomainSpec::target(), 4);
    const std::vector<toydet::Box> rois{{0, 0, 32, 32}, {16, 16, 48, 48}, {30, 8, 62, 40}, {4, 30, 36, 62}};

    Tape tape;
    const toydet::BoundDetector st = toydet::bind(tape, student, true);
    const toydet::BoundDetector te = toydet::bind(tape, teacher, true);
    const BoundGraph g = bind(tape, graph);
    const Var f_st = toydet::roi_pool(toydet::extract_features(st, scene.image), rois);
    const Var f_te = numerics::detach(toydet::roi_pool(toydet::extract_features(te, scene.image), rois));
    const Var z_st = toydet::classify_rois(st, f_st).logits;
    const Var z_te = numerics::detach(toydet::classify_rois(te, f_te).logits);
    const toydet::BoundDetector te_frozen = toydet::bind_frozen(tape, teacher);
    const Var zg_te = toydet::classify_rois(te_frozen, gcn_forward(g, compute_edges(g, f_te), f_te)).logits;
    const Var zg_st = toydet::classify_rois(st, gcn_forward(g, compute_edges(g, f_st), f_st)).logits;
    tape.backward(graph_distillation_loss(z_st, zg_st, z_te, zg_te).total);

    for (const Tensor* t : teacher.tensors()) CHECK_FALSE(t->grad.has_value());
    CHECK(student.cls_w.grad.has_value());
    CHECK(student.feat_w.grad.has_value());
    for (const Tensor* t : graph.tensors()) CHECK(t->grad.has_value());
}

TEST_CASE("distillation gradient with respect to the GCN weight matches finite differences") {
    Rng rng(45);
    const RelationGraph graph = RelationGraph::init(4, 0.25, 1, 5);
    const Tensor f_st = numerics::random_uniform({5, 4}, rng, 0.0, 1.0);
    const Tensor f_te = numerics::random_uniform({5, 4}, rng, 0.0, 1.0);
    const Tensor head = numerics::random_normal({4, 3}, rng);
    const auto fn = [&](Tape& tape, Var w) {
        BoundGraph g = bind_frozen(tape, graph);
        g.gcn_w[0] = w;
        const Var h = tape.constant(head);
        const Var st = tape.constant(f_st), te = tape.constant(f_te);
        const Var zs = numerics::matmul(st, h), zt = numerics::matmul(te, h);
        const Var zgs = numerics::matmul(gcn_forward(g, compute_edges(g, st), st), h);
        const Var zgt = numerics::matmul(gcn_forward(g, compute_edges(g, te), te), h);
        return graph_distillation_loss(zs, zgs, zt, zgt).total;
    };
    CHECK(numerics::finite_diff_check(fn, graph.gcn_w[0]).max_rel_error < 1e-4);
}

TEST_CASE("pairwise_labels examples") {
    const Tensor e = Tensor::matrix({{0.6, 0.3, 0.1}});
    CHECK(pairwise_labels(e, 0.25) == Tensor::matrix({{1, 1, 0}}));
    CHECK(pairwise_labels(e, 0.3) == Tensor::matrix({{1, 1, 0}}));
    CHECK(pairwise_labels(e, 0.7) == Tensor::matrix({{0, 0, 0}}));
}

TEST_CASE("pairwise_labels matches elementwise thresholding") {
    Rng rng(46);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = testing::uniform_size(rng, 2, 10);
        const Tensor e = testing::random_distribution_rows(rng, m, m);
        const double eps = testing::uniform_real(rng, 0.01, 0.6);
        const Tensor labels = pairwise_labels(e, eps);
        for (std::size_t i = 0; i < e.size(); ++i) CHECK(labels[i] == (e[i] >= eps ? 1.0 : 0.0));
    }
}

TEST_CASE("relation graph validation") {
    CHECK_THROWS_AS(RelationGraph::init(4, 0.0, 1, 0), ContractError);
    CHECK_THROWS_AS(RelationGraph::init(4, 1.0, 1, 0), ContractError);
    RelationGraph g = RelationGraph::init(4, 0.5, 2, 0);
    CHECK(g.gcn_w.size() == 2);
    g.f_w[0] = std::nan("");
    CHECK_THROWS_AS(g.validate(), ContractError);
}

}  // TEST_SUITE
