#include "irgsfda/numerics/tape.hpp"

namespace irgsfda::numerics {

const Tensor& Var::value() const {
    if (!tape_) throw ContractError("use of an unbound Var");
    return tape_->value(id_);
}

bool Var::requires_grad() const {
    return tape_ && tape_->requires_grad(id_);
}

Tape& Var::tape() const {
    if (!tape_) throw ContractError("use of an unbound Var");
    return *tape_;
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.value.requires_grad = false;
    n.value.grad.reset();
    return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.value.grad.reset();
    n.needs_grad = true;
    return push(std::move(n));
}

Var Tape::bind(Tensor& param) {
    Node n;
    n.value = Tensor(param.shape(), param.storage());
    n.needs_grad = param.requires_grad;
    n.external = param.requires_grad ? &param : nullptr;
    return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule) {
    Node n;
    n.value = std::move(value);
    n.inputs.reserve(inputs.size());
    for (const Var& v : inputs) {
        if (&v.tape() != this) throw ContractError("operand recorded on a different tape");
        n.inputs.push_back(v.id());
        n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
    }
    if (!rule) n.needs_grad = false;
    if (n.needs_grad) n.rule = std::move(rule);
    return push(std::move(n));
}

void Tape::backward(Var loss) {
    if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
    if (loss.size() != 1)
        throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
    if (consumed_) throw ContractError("backward: tape already consumed");
    consumed_ = true;

    Node& root = nodes_[loss.id()];
    if (!root.needs_grad) return;
    root.grad.assign(1, 1.0);

    std::vector<const Tensor*> in;
    std::vector<std::vector<double>*> in_grad;
    for (std::size_t k = loss.id() + 1; k-- > 0;) {
        Node& node = nodes_[k];
        if (!node.needs_grad || node.grad.empty() || !node.rule) continue;
        in.clear();
        in_grad.clear();
        for (std::size_t id : node.inputs) {
            Node& src = nodes_[id];
            in.push_back(&src.value);
            if (src.needs_grad) {
                if (src.grad.empty()) src.grad.assign(src.value.size(), 0.0);
                in_grad.push_back(&src.grad);
            } else {
                in_grad.push_back(nullptr);
            }
        }
        node.rule(Backprop{node.grad, node.value, in, in_grad});
    }

    for (Node& node : nodes_) {
        if (!node.external || node.grad.empty()) continue;
        auto& g = node.external->grad;
        if (!g || g->size() != node.grad.size()) g.emplace(node.grad.size(), 0.0);
        for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[i] += node.grad[i];
    }
}

const std::vector<double>& Tape::grad(Var v) const {
    return nodes_.at(v.id()).grad;
}

}  // namespace irgsfda::numerics
