#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dadapt/tensor.hpp"

namespace dadapt::num {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Propagates `self.grad` into the grads of `self.parents`.
using BackwardFn = std::function<void(Node& self)>;

struct Node {
    Tensor value;
    Tensor grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    BackwardFn backward;

    /// Returns grad, allocating a zero buffer shaped like value on first use.
    Tensor& grad_buffer();
};

/// Handle to a node of the reverse-mode tape. Copies share the node.
///
/// Leaves come from `constant` (no gradient) or `parameter`. Interior nodes
/// come from the ops in ops.hpp, or from `Var::make` for custom rules.
/// The graph lives as long as some Var references its root.
class Var {
public:
    Var() = default;

    static Var constant(Tensor value);
    static Var parameter(Tensor value);
    /// Registers an op result. `backward` is only kept when a parent needs it.
    static Var make(Tensor value, std::vector<Var> parents, BackwardFn backward);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    /// Leaf storage, mutated in place by optimizers and gradient checks.
    Tensor& mutable_value() { return node_->value; }

    bool has_grad() const { return node_ && node_->grad.numel() > 0; }
    /// Accumulated gradient; a zero tensor if nothing has flowed in yet.
    Tensor grad() const;
    void zero_grad() { node_->grad = Tensor(); }

    /// Reverse sweep from a scalar. Gradients accumulate into every
    /// requires_grad ancestor.
    void backward() const;

    /// Same value, cut from the tape.
    Var detach() const { return constant(node_->value); }

    Node& node() { return *node_; }
    const NodePtr& node_ptr() const { return node_; }

private:
    explicit Var(NodePtr n) : node_(std::move(n)) {}
    NodePtr node_;
};

/// While alive, ops on this thread record no tape (results are constants).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool active();

private:
    bool previous_;
};

}  // namespace dadapt::num
