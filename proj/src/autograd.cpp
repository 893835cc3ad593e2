#include "dadapt/autograd.hpp"

#include <unordered_set>

namespace dadapt::num {

namespace {
thread_local bool g_no_grad = false;
}

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

Tensor& Node::grad_buffer() {
    if (grad.numel() == 0 && value.numel() > 0) grad = Tensor(value.shape());
    return grad;
}

Var Var::constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var Var::parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

Var Var::make(Tensor value, std::vector<Var> parents, BackwardFn backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (!g_no_grad) {
        for (const auto& p : parents) {
            if (p.requires_grad()) n->requires_grad = true;
        }
    }
    if (n->requires_grad) {
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node_);
        n->backward = std::move(backward);
    }
    return Var(std::move(n));
}

Tensor Var::grad() const {
    if (has_grad()) return node_->grad;
    return Tensor(node_->value.shape());
}

void Var::backward() const {
    if (node_->value.numel() != 1) {
        throw ShapeError("backward() requires a scalar root, got " + shape_str(node_->value.shape()));
    }
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; reverse chains can be thousands of nodes deep.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.numel() > 0) {
            n->backward(*n);
            // Interior grads are not needed after propagation.
            if (!n->parents.empty()) n->grad = Tensor();
        }
    }
}

}  // namespace dadapt::num
