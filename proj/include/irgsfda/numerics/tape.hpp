#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "irgsfda/numerics/tensor.hpp"

namespace irgsfda::numerics {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape is alive.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    double item() const { return value().item(); }
    bool requires_grad() const;

    Tape& tape() const;
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// What a primitive's backward rule sees: the upstream gradient, the forward
/// output and inputs, and one gradient accumulator per input (null when that
/// input does not need a gradient).
struct Backprop {
    std::span<const double> out_grad;
    const Tensor& out;
    std::span<const Tensor* const> in;
    std::span<std::vector<double>* const> in_grad;
};

using BackwardRule = std::function<void(const Backprop&)>;

/// Define-by-run record of primitive operations.
///
/// Nodes are appended in execution order, so the tape is topologically
/// sorted by construction and a reverse sweep visits each operation once.
/// A fresh tape is built for every forward pass.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Value that never receives a gradient (data, detached tensors).
    Var constant(Tensor value);
    /// Owned leaf that receives a gradient, readable through `grad()`.
    Var leaf(Tensor value);
    /// Leaf aliasing an external parameter. After `backward()` the gradient
    /// is accumulated into `param.grad`. When `param.requires_grad` is false
    /// this behaves like `constant`.
    Var bind(Tensor& param);

    /// Records a primitive. `rule` may be empty for non-differentiable ops.
    Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule);

    /// Reverse sweep from a scalar loss. May be called once per tape.
    void backward(Var loss);

    /// Gradient accumulated for `v` by the last backward pass; empty when the
    /// node did not need one.
    const std::vector<double>& grad(Var v) const;

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<std::size_t> inputs;
        BackwardRule rule;
        bool needs_grad = false;
        Tensor* external = nullptr;
        std::vector<double> grad;
    };

    Var push(Node node);

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace irgsfda::numerics
