#include "dadapt/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dadapt/ops.hpp"

namespace dadapt::diffusion {

VarianceSchedule::VarianceSchedule(std::vector<Real> betas) : beta_(std::move(betas)) {
    if (beta_.empty()) throw std::invalid_argument("VarianceSchedule: need at least one step");
    alpha_.resize(beta_.size());
    alpha_bar_.resize(beta_.size());
    Real running = Real(1);
    for (std::size_t i = 0; i < beta_.size(); ++i) {
        if (!(beta_[i] >= Real(0) && beta_[i] < Real(1))) {
            throw std::invalid_argument("VarianceSchedule: beta_" + std::to_string(i + 1) + " outside [0, 1)");
        }
        alpha_[i] = Real(1) - beta_[i];
        running *= alpha_[i];
        alpha_bar_[i] = running;
    }
}

std::size_t VarianceSchedule::index(int k) const {
    if (k < 1 || k > K()) {
        throw std::out_of_range("diffusion step " + std::to_string(k) + " outside [1, " + std::to_string(K()) + "]");
    }
    return std::size_t(k - 1);
}

VarianceSchedule make_linear_schedule(int K, Real beta_1, Real beta_K) {
    if (K < 1) throw std::invalid_argument("make_linear_schedule: K must be >= 1");
    if (!(beta_1 > Real(0) && beta_1 <= beta_K && beta_K < Real(1))) {
        throw std::invalid_argument("make_linear_schedule: need 0 < beta_1 <= beta_K < 1");
    }
    std::vector<Real> betas(static_cast<std::size_t>(K));
    if (K == 1) {
        betas[0] = beta_1;
    } else {
        const Real step = (beta_K - beta_1) / Real(K - 1);
        for (int k = 1; k <= K; ++k) betas[std::size_t(k - 1)] = beta_1 + Real(k - 1) * step;
        betas.back() = beta_K;
    }
    return VarianceSchedule(std::move(betas));
}

namespace {

Tensor blend(Real a, const Tensor& x, Real b, const Tensor& noise, const char* op) {
    num::require_same_shape(x, noise, op);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x[i] + b * noise[i];
    out.require_finite(op);
    return out;
}

}  // namespace

Tensor diffuse_one_step(const Tensor& f_prev, int k, const VarianceSchedule& sched, const Tensor& noise) {
    const Real b = sched.beta(k);
    return blend(std::sqrt(Real(1) - b), f_prev, std::sqrt(b), noise, "diffuse_one_step");
}

Tensor diffuse_k_steps(const Tensor& f0, int k, const VarianceSchedule& sched, const Tensor& noise) {
    const Real ab = sched.alpha_bar(k);
    return blend(std::sqrt(ab), f0, std::sqrt(Real(1) - ab), noise, "diffuse_k_steps");
}

Var reverse_mean(const Var& f_k, int k, const VarianceSchedule& sched, const NoiseModel& f_theta) {
    const Real beta = sched.beta(k);
    const Real inv_sqrt_alpha = Real(1) / std::sqrt(sched.alpha(k));
    const Real one_minus_ab = Real(1) - sched.alpha_bar(k);
    if (beta == Real(0)) return num::scale(f_k, inv_sqrt_alpha);
    const Real eps_coef = beta / std::sqrt(one_minus_ab);
    const std::vector<int> ks(f_k.value().rows(), k);
    const Var eps = f_theta.predict(f_k, ks);
    return num::axpby(inv_sqrt_alpha, f_k, -inv_sqrt_alpha * eps_coef, eps);
}

Var reverse_one_step(const Var& f_k, int k, const VarianceSchedule& sched, const NoiseModel& f_theta,
                     const Tensor& noise) {
    num::require_same_shape(f_k.value(), noise, "reverse_one_step");
    Var mu = reverse_mean(f_k, k, sched, f_theta);
    if (k == 1) return mu;
    return num::axpby(Real(1), mu, std::sqrt(sched.beta(k)), Var::constant(noise));
}

Var reverse_loss(const Tensor& features, const NoiseModel& f_theta, const VarianceSchedule& sched,
                 std::span<const int> ks, const Tensor& noise) {
    if (features.rank() != 2 || features.rows() == 0) throw std::invalid_argument("reverse_loss: empty batch");
    num::require_same_shape(features, noise, "reverse_loss");
    if (ks.size() != features.rows()) throw num::ShapeError("reverse_loss: one step index per row required");
    const std::size_t d = features.cols();
    Tensor noisy(features.shape());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const Real ab = sched.alpha_bar(ks[i]);
        const Real a = std::sqrt(ab), b = std::sqrt(Real(1) - ab);
        for (std::size_t j = 0; j < d; ++j) noisy.at(i, j) = a * features.at(i, j) + b * noise.at(i, j);
    }
    const Var pred = f_theta.predict(Var::constant(std::move(noisy)), ks);
    // mean over all entries == mean over rows of ||.||^2 / d
    return num::mse(pred, Var::constant(noise));
}

Var reverse_loss(const Tensor& features, const NoiseModel& f_theta, const VarianceSchedule& sched, num::Rng& rng) {
    if (features.rank() != 2 || features.rows() == 0) throw std::invalid_argument("reverse_loss: empty batch");
    std::vector<int> ks(features.rows());
    for (auto& k : ks) k = int(rng.uniform_int(1, sched.K()));
    const Tensor noise = num::gaussian(rng, features.shape());
    return reverse_loss(features, f_theta, sched, ks, noise);
}

}  // namespace dadapt::diffusion
