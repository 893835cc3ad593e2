#include "dadapt/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dadapt::num {

Real poly_lr(Real base_lr, long iter, long total_iters, Real power) {
    if (total_iters <= 0) throw std::invalid_argument("poly_lr: total_iters must be positive");
    if (iter < 0) throw std::invalid_argument("poly_lr: negative iteration");
    if (iter > total_iters) {
        throw std::out_of_range("poly_lr: iteration " + std::to_string(iter) + " beyond " + std::to_string(total_iters));
    }
    const Real frac = Real(1) - Real(iter) / Real(total_iters);
    return base_lr * std::pow(frac, power);
}

void sgd_momentum_step(std::span<Var> params, std::span<const Tensor> grads, SgdMomentumState& state, Real lr) {
    if (lr < Real(0) || !std::isfinite(lr)) throw std::invalid_argument("sgd_momentum_step: lr must be finite and >= 0");
    if (params.size() != grads.size()) throw ShapeError("sgd_momentum_step: parameter/gradient count mismatch");
    if (state.velocity.empty()) {
        state.velocity.reserve(params.size());
        for (const auto& p : params) state.velocity.emplace_back(p.shape());
    }
    if (state.velocity.size() != params.size()) throw ShapeError("sgd_momentum_step: state sized for another parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = params[i].mutable_value();
        require_same_shape(w, grads[i], "sgd_momentum_step");
        require_same_shape(w, state.velocity[i], "sgd_momentum_step");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& w = params[i].mutable_value().storage();
        const auto& g = grads[i].storage();
        auto& v = state.velocity[i].storage();
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = state.momentum * v[j] + (g[j] + state.weight_decay * w[j]);
            w[j] -= lr * v[j];
        }
        params[i].mutable_value().require_finite("sgd_momentum_step");
    }
}

PolySgd::PolySgd(OptimSettings settings, long total_iters) : settings_(settings), total_(total_iters) {
    if (total_iters < 0) throw std::invalid_argument("PolySgd: negative iteration budget");
    state_.momentum = settings.momentum;
    state_.weight_decay = settings.weight_decay;
}

Real PolySgd::current_lr() const {
    if (total_ == 0) return Real(0);
    return poly_lr(settings_.lr, std::min(iter_, total_), total_, settings_.poly_power);
}

void PolySgd::step(std::span<Var> params) {
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (auto& p : params) grads.push_back(p.grad());
    sgd_momentum_step(params, grads, state_, current_lr());
    for (auto& p : params) p.zero_grad();
    ++iter_;
}

}  // namespace dadapt::num
