#include "irgsfda/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "irgsfda/numerics/kernels.hpp"

namespace irgsfda::numerics {

namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                             " vs " + shape_string(b.shape()));
}

void require_matrix(const char* op, const Var& a) {
    if (a.value().rank() != 2)
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

Tape& tape_of(const Var& a, const Var& b) {
    if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
    return a.tape();
}

kernels::MatView view(const Tensor& t) {
    return {t.values(), t.rows(), t.cols()};
}

template <class F>
Var unary_elementwise(Var x, F&& fwd, BackwardRule rule) {
    Tensor out(x.shape());
    const auto in = x.value().values();
    auto o = out.values();
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = fwd(in[i]);
    return x.tape().record(std::move(out), {x}, std::move(rule));
}

double stable_sigmoid(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
    require_same_shape("add", a, b);
    Tensor out(a.shape());
    const auto av = a.value().values(), bv = b.value().values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return tape_of(a, b).record(std::move(out), {a, b}, [](const Backprop& bp) {
        for (auto* g : bp.in_grad)
            if (g)
                for (std::size_t i = 0; i < bp.out_grad.size(); ++i) (*g)[i] += bp.out_grad[i];
    });
}

Var sub(Var a, Var b) {
    require_same_shape("sub", a, b);
    Tensor out(a.shape());
    const auto av = a.value().values(), bv = b.value().values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return tape_of(a, b).record(std::move(out), {a, b}, [](const Backprop& bp) {
        if (auto* g = bp.in_grad[0])
            for (std::size_t i = 0; i < bp.out_grad.size(); ++i) (*g)[i] += bp.out_grad[i];
        if (auto* g = bp.in_grad[1])
            for (std::size_t i = 0; i < bp.out_grad.size(); ++i) (*g)[i] -= bp.out_grad[i];
    });
}

Var mul(Var a, Var b) {
    require_same_shape("mul", a, b);
    Tensor out(a.shape());
    const auto av = a.value().values(), bv = b.value().values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return tape_of(a, b).record(std::move(out), {a, b}, [](const Backprop& bp) {
        const auto av = bp.in[0]->values(), bv = bp.in[1]->values();
        if (auto* g = bp.in_grad[0])
            for (std::size_t i = 0; i < bp.out_grad.size(); ++i) (*g)[i] += bp.out_grad[i] * bv[i];
        if (auto* g = bp.in_grad[1])
            for (std::size_t i = 0; i < bp.out_grad.size(); ++i) (*g)[i] += bp.out_grad[i] * av[i];
    });
}

Var scale(Var a, double c) {
    return unary_elementwise(a, [c](double v) { return c * v; }, [c](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        for (std::size_t i = 0; i < bp.out_grad.size(); ++i) g[i] += c * bp.out_grad[i];
    });
}

Var add_row_bias(Var a, Var bias) {
    require_matrix("add_row_bias", a);
    const std::size_t m = a.rows(), n = a.cols();
    if (bias.size() != n || (bias.value().rank() == 2 && bias.rows() != 1))
        throw DimensionError("add_row_bias: bias " + shape_string(bias.shape()) +
                             " does not fit rows of " + shape_string(a.shape()));
    Tensor out = a.value();
    out.grad.reset();
    const auto bv = bias.value().values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bv[j];
    return tape_of(a, bias).record(std::move(out), {a, bias}, [m, n](const Backprop& bp) {
        if (auto* g = bp.in_grad[0])
            for (std::size_t i = 0; i < m * n; ++i) (*g)[i] += bp.out_grad[i];
        if (auto* g = bp.in_grad[1])
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*g)[j] += bp.out_grad[i * n + j];
    });
}

Var matmul(Var a, Var b) {
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " by " +
                             shape_string(b.shape()));
    Tensor out({a.rows(), b.cols()});
    kernels::gemm_accumulate(view(a.value()), kernels::Trans::No, view(b.value()), kernels::Trans::No,
                             out.values());
    return tape_of(a, b).record(std::move(out), {a, b}, [](const Backprop& bp) {
        const kernels::MatView g{bp.out_grad, bp.out.rows(), bp.out.cols()};
        // dA = G B^T, dB = A^T G
        if (auto* ga = bp.in_grad[0])
            kernels::gemm_accumulate(g, kernels::Trans::No, view(*bp.in[1]), kernels::Trans::Yes, *ga);
        if (auto* gb = bp.in_grad[1])
            kernels::gemm_accumulate(view(*bp.in[0]), kernels::Trans::Yes, g, kernels::Trans::No, *gb);
    });
}

Var matmul_nt(Var a, Var b) {
    require_matrix("matmul_nt", a);
    require_matrix("matmul_nt", b);
    if (a.cols() != b.cols())
        throw DimensionError("matmul_nt: inner dimensions differ, " + shape_string(a.shape()) +
                             " by transpose of " + shape_string(b.shape()));
    Tensor out({a.rows(), b.rows()});
    kernels::gemm_accumulate(view(a.value()), kernels::Trans::No, view(b.value()), kernels::Trans::Yes,
                             out.values());
    return tape_of(a, b).record(std::move(out), {a, b}, [](const Backprop& bp) {
        const kernels::MatView g{bp.out_grad, bp.out.rows(), bp.out.cols()};
        // C = A B^T: dA = G B, dB = G^T A
        if (auto* ga = bp.in_grad[0])
            kernels::gemm_accumulate(g, kernels::Trans::No, view(*bp.in[1]), kernels::Trans::No, *ga);
        if (auto* gb = bp.in_grad[1])
            kernels::gemm_accumulate(g, kernels::Trans::Yes, view(*bp.in[0]), kernels::Trans::No, *gb);
    });
}

Var transpose(Var a) {
    require_matrix("transpose", a);
    const std::size_t r = a.rows(), c = a.cols();
    return a.tape().record(a.value().transposed(), {a}, [r, c](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += bp.out_grad[j * r + i];
    });
}

Var relu(Var x) {
    return unary_elementwise(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        const auto xv = bp.in[0]->values();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > 0.0) g[i] += bp.out_grad[i];
    });
}

Var sigmoid(Var x) {
    return unary_elementwise(x, stable_sigmoid, [](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        const auto y = bp.out.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += bp.out_grad[i] * y[i] * (1.0 - y[i]);
    });
}

Var softplus(Var x) {
    auto fwd = [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); };
    return unary_elementwise(x, fwd, [](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        const auto xv = bp.in[0]->values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += bp.out_grad[i] * stable_sigmoid(xv[i]);
    });
}

Var smooth_l1(Var x) {
    auto fwd = [](double v) {
        const double a = std::abs(v);
        return a < 1.0 ? 0.5 * v * v : a - 0.5;
    };
    return unary_elementwise(x, fwd, [](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        const auto xv = bp.in[0]->values();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = xv[i];
            const double d = std::abs(v) < 1.0 ? v : (v > 0.0 ? 1.0 : -1.0);
            g[i] += bp.out_grad[i] * d;
        }
    });
}

Var softmax_rows(Var x) {
    require_matrix("softmax_rows", x);
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out({m, n});
    const Tensor& in = x.value();
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += (out.at(i, j) = std::exp(in.at(i, j) - mx));
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= s;
    }
    return x.tape().record(std::move(out), {x}, [m, n](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += bp.out_grad[i * n + j] * bp.out.at(i, j);
            for (std::size_t j = 0; j < n; ++j)
                g[i * n + j] += bp.out.at(i, j) * (bp.out_grad[i * n + j] - dot);
        }
    });
}

Var log_softmax_rows(Var x) {
    require_matrix("log_softmax_rows", x);
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out({m, n});
    const Tensor& in = x.value();
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(in.at(i, j) - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = in.at(i, j) - lse;
    }
    return x.tape().record(std::move(out), {x}, [m, n](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        for (std::size_t i = 0; i < m; ++i) {
            double gs = 0.0;
            for (std::size_t j = 0; j < n; ++j) gs += bp.out_grad[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                g[i * n + j] += bp.out_grad[i * n + j] - std::exp(bp.out.at(i, j)) * gs;
        }
    });
}

Var l2_normalize_rows(Var x) {
    require_matrix("l2_normalize_rows", x);
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out({m, n});
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += x.value().at(i, j) * x.value().at(i, j);
        norms[i] = std::sqrt(s);
        if (!(norms[i] > 0.0))
            throw ContractError("l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = x.value().at(i, j) / norms[i];
    }
    return x.tape().record(std::move(out), {x}, [m, n, norms](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += bp.out_grad[i * n + j] * bp.out.at(i, j);
            for (std::size_t j = 0; j < n; ++j)
                g[i * n + j] += (bp.out_grad[i * n + j] - bp.out.at(i, j) * dot) / norms[i];
        }
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return x.tape().record(Tensor::scalar(s), {x}, [](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        for (double& gi : g) gi += bp.out_grad[0];
    });
}

Var mean(Var x) {
    const double n = static_cast<double>(x.size());
    return scale(sum(x), 1.0 / n);
}

Var weighted_sum(Var x, const Tensor& weights) {
    if (weights.size() != x.size())
        throw DimensionError("weighted_sum: weights " + shape_string(weights.shape()) + " vs " +
                             shape_string(x.shape()));
    double s = 0.0;
    const auto xv = x.value().values();
    const auto wv = weights.values();
    for (std::size_t i = 0; i < xv.size(); ++i) s += wv[i] * xv[i];
    return x.tape().record(Tensor::scalar(s), {x}, [w = weights.storage()](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += bp.out_grad[0] * w[i];
    });
}

Var kl_divergence_rows(Var p, Var q) {
    require_matrix("kl_divergence_rows", p);
    require_same_shape("kl_divergence_rows", p, q);
    const std::size_t m = p.rows(), n = p.cols();
    const Tensor& pv = p.value();
    const Tensor& qv = q.value();
    for (std::size_t i = 0; i < m; ++i) {
        double sp = 0.0, sq = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (pv.at(i, j) < 0.0 || qv.at(i, j) < 0.0)
                throw ContractError("kl_divergence_rows: negative probability in row " + std::to_string(i));
            sp += pv.at(i, j);
            sq += qv.at(i, j);
        }
        if (std::abs(sp - 1.0) > 1e-6 || std::abs(sq - 1.0) > 1e-6)
            throw ContractError("kl_divergence_rows: row " + std::to_string(i) + " is not normalized");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double a = pv.at(i, j);
            if (a > 0.0) total += a * (std::log(a) - std::log(std::max(qv.at(i, j), kLogFloor)));
        }
    total /= static_cast<double>(m);
    return tape_of(p, q).record(Tensor::scalar(total), {p, q}, [m](const Backprop& bp) {
        const double g0 = bp.out_grad[0] / static_cast<double>(m);
        const auto pv = bp.in[0]->values(), qv = bp.in[1]->values();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double a = pv[i];
            if (!(a > 0.0)) continue;
            const double b = std::max(qv[i], kLogFloor);
            if (auto* gp = bp.in_grad[0]) (*gp)[i] += g0 * (std::log(a) - std::log(b) + 1.0);
            if (auto* gq = bp.in_grad[1])
                if (qv[i] > kLogFloor) (*gq)[i] -= g0 * a / b;
        }
    });
}

Var masked_logsumexp_rows(Var x, const Tensor& mask) {
    require_matrix("masked_logsumexp_rows", x);
    if (mask.shape() != x.shape())
        throw DimensionError("masked_logsumexp_rows: mask " + shape_string(mask.shape()) + " vs " +
                             shape_string(x.shape()));
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out({m, 1});
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (mask.at(i, j) != 0.0) mx = std::max(mx, xv.at(i, j));
        if (!std::isfinite(mx)) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (mask.at(i, j) != 0.0) s += std::exp(xv.at(i, j) - mx);
        out.at(i, 0) = mx + std::log(s);
    }
    return x.tape().record(std::move(out), {x}, [m, n, mask](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        const Tensor& xv = *bp.in[0];
        for (std::size_t i = 0; i < m; ++i) {
            const double gi = bp.out_grad[i];
            if (gi == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j)
                if (mask.at(i, j) != 0.0) g[i * n + j] += gi * std::exp(xv.at(i, j) - bp.out.at(i, 0));
        }
    });
}

Var detach(Var x) {
    return x.tape().constant(x.value());
}

Var scale_gradient(Var x, double factor) {
    return x.tape().record(x.value(), {x}, [factor](const Backprop& bp) {
        auto& g = *bp.in_grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * bp.out_grad[i];
    });
}

}  // namespace irgsfda::numerics
