#pragma once

#include <span>
#include <vector>

#include "dadapt/autograd.hpp"

namespace dadapt::num {

/// base_lr * (1 - iter / total_iters)^power.
Real poly_lr(Real base_lr, long iter, long total_iters, Real power);

struct SgdMomentumState {
    Real momentum = Real(0.9);
    Real weight_decay = Real(0);
    std::vector<Tensor> velocity;  // lazily sized to the parameter list
};

/// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
void sgd_momentum_step(std::span<Var> params, std::span<const Tensor> grads, SgdMomentumState& state, Real lr);

struct OptimSettings {
    Real lr = Real(0.001);
    Real momentum = Real(0.9);
    Real weight_decay = Real(0.05);
    Real poly_power = Real(0.9);
};

/// SGD with momentum driven by a poly schedule over a fixed iteration budget.
class PolySgd {
public:
    PolySgd(OptimSettings settings, long total_iters);

    /// Applies one step using the accumulated grads of `params`, then
    /// clears those grads.
    void step(std::span<Var> params);

    long iteration() const { return iter_; }
    Real current_lr() const;
    const SgdMomentumState& state() const { return state_; }

private:
    OptimSettings settings_;
    long total_;
    long iter_ = 0;
    SgdMomentumState state_;
};

}  // namespace dadapt::num
