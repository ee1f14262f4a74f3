#include <cmath>
#include <numeric>

#include "doctest.h"
#include "irgsfda/contrastive/contrastive.hpp"
#include "irgsfda/numerics/gradcheck.hpp"
#include "support.hpp"

using namespace irgsfda;
using namespace irgsfda::contrastive;
using numerics::ContractError;
using numerics::Rng;

namespace {

ProjectionHead identity_head(std::size_t d) {
    ProjectionHead h = ProjectionHead::init(d, 0);
    h.w_k = Tensor::identity(d);
    h.w_q = Tensor::identity(d);
    return h;
}

Tensor off_diagonal_ones(std::size_t m) {
    Tensor t({m, m}, 1.0);
    for (std::size_t i = 0; i < m; ++i) t.at(i, i) = 0.0;
    return t;
}

double gcl(const Tensor& r, const Tensor& m, double temperature = 1.0) {
    Tape tape;
    return graph_contrastive_loss(tape.constant(r), m, {temperature}).item();
}

}  // namespace

TEST_SUITE("contrastive") {

TEST_CASE("project examples") {
    ProjectionHead h = identity_head(3);
    Rng rng(50);
    const Tensor v = numerics::random_normal({4, 3}, rng);
    Tape tape;
    const KeysQueries kq = project(bind(tape, h), tape.constant(v));
    CHECK(kq.keys.value() == v);
    CHECK(kq.queries.value() == v);

    ProjectionHead r = ProjectionHead::init(3, 9);
    const KeysQueries z = project(bind(tape, r), tape.constant(Tensor({4, 3})));
    for (double x : z.keys.value().values()) CHECK(x == 0.0);
    for (double x : z.queries.value().values()) CHECK(x == 0.0);
}

TEST_CASE("pairwise_logits examples") {
    Tape tape;
    const Var i2 = tape.constant(Tensor::identity(2));
    CHECK(pairwise_logits(i2, i2).value() == Tensor::identity(2));

    Rng rng(51);
    const Tensor q = numerics::random_normal({3, 2}, rng), k = numerics::random_normal({3, 2}, rng);
    const Tensor r = pairwise_logits(tape.constant(q), tape.constant(k)).value();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(r.at(i, j) == doctest::Approx(q.at(i, 0) * k.at(j, 0) + q.at(i, 1) * k.at(j, 1)).epsilon(1e-15));
}

TEST_CASE("graph_contrastive_loss examples") {
    CHECK(gcl(Tensor::matrix({{0.3, -1.2}, {2.0, 0.7}}), off_diagonal_ones(2)) == doctest::Approx(0.0).epsilon(1e-15));

    // each anchor: one positive out of two candidates
    const Tensor m3 = Tensor::matrix({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}});
    CHECK(gcl(Tensor({3, 3}), m3) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(gcl(Tensor({3, 3}), m3) == doctest::Approx(2.0794).epsilon(1e-4));
    CHECK(gcl_oracle(Tensor({3, 3}), m3) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(gcl_oracle(Tensor::matrix({{0.3, -1.2}, {2.0, 0.7}}), off_diagonal_ones(2)) == doctest::Approx(0.0));
}

TEST_CASE("graph_contrastive_loss rejects fewer than two nodes") {
    CHECK_THROWS_AS(gcl(Tensor({1, 1}), Tensor({1, 1})), ContractError);
}

TEST_CASE("empty positive sets contribute nothing") {
    Rng rng(52);
    const Tensor r = numerics::random_normal({4, 4}, rng);
    CHECK(gcl(r, Tensor({4, 4})) == 0.0);
    CHECK(gcl_oracle(r, Tensor({4, 4})) == 0.0);

    Tensor one_row({4, 4});
    one_row.at(2, 0) = 1.0;
    Tensor only_row2({4, 4});
    only_row2.at(2, 0) = 1.0;
    only_row2.at(2, 2) = 1.0;  // the diagonal is never consumed
    CHECK(gcl(r, one_row) == doctest::Approx(gcl(r, only_row2)).epsilon(1e-15));
}

TEST_CASE("stabilized loss agrees with the set-enumeration oracle") {
    Rng rng(53);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = testing::uniform_size(rng, 2, 5);
        const double bound = testing::uniform_real(rng, 0.1, 50.0);
        const Tensor r = numerics::random_uniform({m, m}, rng, -bound, bound);
        const Tensor labels = testing::random_mask(rng, m, m, testing::uniform_real(rng, 0.1, 0.9));
        const double fast = gcl(r, labels), slow = gcl_oracle(r, labels);
        CHECK(fast >= 0.0);
        CHECK(std::abs(fast - slow) <= 1e-9 * std::max(1.0, std::abs(slow)));
    }
}

// With P(i) = A(i) each anchor's ratio mean is 1 / |A(i)|, so the loss is
// m log(m - 1): zero only for m = 2.
TEST_CASE("every candidate positive gives m log(m - 1)") {
    Rng rng(54);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = testing::uniform_size(rng, 2, 8);
        const double want = static_cast<double>(m) * std::log(static_cast<double>(m - 1));
        CHECK(gcl(numerics::random_normal({m, m}, rng, 5.0), off_diagonal_ones(m)) ==
              doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("adding a constant to a row of R leaves the loss unchanged") {
    Rng rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = testing::uniform_size(rng, 2, 6);
        const Tensor r = numerics::random_normal({m, m}, rng, 3.0);
        const Tensor labels = testing::random_mask(rng, m, m, 0.5);
        Tensor shifted = r;
        const std::size_t row = testing::uniform_size(rng, 0, m - 1);
        const double c = testing::uniform_real(rng, -100.0, 100.0);
        for (std::size_t j = 0; j < m; ++j) shifted.at(row, j) += c;
        CHECK(gcl(shifted, labels) == doctest::Approx(gcl(r, labels)).epsilon(1e-10));
    }
}

TEST_CASE("temperature divides the logits") {
    Rng rng(56);
    const Tensor r = numerics::random_normal({4, 4}, rng);
    const Tensor labels = testing::random_mask(rng, 4, 4, 0.5);
    Tensor halved = r;
    for (double& v : halved.values()) v /= 2.0;
    CHECK(gcl(r, labels, 2.0) == doctest::Approx(gcl(halved, labels)).epsilon(1e-14));
}

TEST_CASE("gradient through project and pairwise_logits matches finite differences") {
    Rng rng(57);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = testing::uniform_size(rng, 2, 6), d = testing::uniform_size(rng, 1, 5);
        ProjectionHead head = ProjectionHead::init(d, trial);
        const Tensor v = numerics::random_normal({m, d}, rng);
        const Tensor labels = testing::random_mask(rng, m, m, 0.5);
        const auto fn = [&](Tape& tape, Var x) {
            const KeysQueries kq = project(bind(tape, head), x);
            return graph_contrastive_loss(pairwise_logits(kq.queries, kq.keys), labels);
        };
        CHECK(numerics::finite_diff_check(fn, v).max_rel_error < 1e-4);
    }
}

TEST_CASE("gradient reaches the projection head and not detached teacher features") {
    ProjectionHead head = ProjectionHead::init(3, 1);
    Rng rng(58);
    Tensor student = numerics::random_normal({4, 3}, rng);
    Tensor teacher = numerics::random_normal({4, 3}, rng);
    student.requires_grad = true;
    teacher.requires_grad = true;
    Tape tape;
    const Var vs = tape.bind(student);
    const Var vt = numerics::detach(tape.bind(teacher));
    const KeysQueries kq = project(bind(tape, head), numerics::add(vs, vt));
    tape.backward(graph_contrastive_loss(pairwise_logits(kq.queries, kq.keys), off_diagonal_ones(4)));
    CHECK(head.w_k.grad.has_value());
    CHECK(head.w_q.grad.has_value());
    CHECK(student.grad.has_value());
    CHECK_FALSE(teacher.grad.has_value());
}

TEST_CASE("simclr_loss examples") {
    Tape tape;
    const std::vector<std::size_t> partner{1, 0, 3, 2};
    const Tensor f = Tensor::matrix({{1, 0}, {1, 0}, {0, 1}, {0, 1}});
    const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
    CHECK(simclr_loss(tape.constant(f), partner).item() == doctest::Approx(expected).epsilon(1e-14));
    CHECK(expected == doctest::Approx(0.5514).epsilon(1e-4));

    for (std::size_t n : {2u, 3u, 5u}) {
        std::vector<std::size_t> p(2 * n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i + n, p[i + n] = i;
        const Tensor same({2 * n, 3}, 0.4);
        CHECK(simclr_loss(tape.constant(same), p).item() ==
              doctest::Approx(std::log(2.0 * static_cast<double>(n) - 1.0)).epsilon(1e-14));
    }
}

TEST_CASE("simclr_loss contracts") {
    Tape tape;
    const std::vector<std::size_t> partner{1, 0, 3, 2};
    Tensor f = Tensor::matrix({{1, 0}, {1, 0}, {0, 0}, {0, 1}});
    CHECK_THROWS_AS(simclr_loss(tape.constant(f), partner), ContractError);
    const std::vector<std::size_t> one_pair{1, 0};
    CHECK_THROWS_AS(simclr_loss(tape.constant(Tensor::matrix({{1, 0}, {0, 1}})), one_pair), ContractError);
}

TEST_CASE("simclr_loss is nonnegative with a correct gradient") {
    Rng rng(59);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = testing::uniform_size(rng, 2, 3), d = testing::uniform_size(rng, 2, 5);
        std::vector<std::size_t> p(2 * n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i + n, p[i + n] = i;
        const Tensor x = numerics::random_normal({2 * n, d}, rng);
        Tape tape;
        CHECK(simclr_loss(tape.constant(x), p).item() >= 0.0);
        const auto fn = [&](Tape&, Var v) { return simclr_loss(v, p); };
        CHECK(numerics::finite_diff_check(fn, x).max_rel_error < 1e-4);
    }
}

}  // TEST_SUITE
