#pragma once

#include <span>
#include <vector>

#include "dadapt/autograd.hpp"
#include "dadapt/rng.hpp"

namespace dadapt::diffusion {

using num::Real;
using num::Tensor;
using num::Var;

/// beta_k, alpha_k = 1 - beta_k and alpha_bar_k = prod_{s<=k} alpha_s for
/// k = 1..K. Accessors take the 1-based step index.
class VarianceSchedule {
public:
    VarianceSchedule() = default;
    /// Arbitrary betas, each in [0, 1). Zero entries are allowed so that
    /// identity cases can be built explicitly.
    explicit VarianceSchedule(std::vector<Real> betas);

    int K() const { return int(beta_.size()); }
    Real beta(int k) const { return beta_.at(index(k)); }
    Real alpha(int k) const { return alpha_.at(index(k)); }
    /// alpha_bar(0) == 1.
    Real alpha_bar(int k) const { return k == 0 ? Real(1) : alpha_bar_.at(index(k)); }
    const std::vector<Real>& betas() const { return beta_; }

private:
    std::size_t index(int k) const;

    std::vector<Real> beta_;
    std::vector<Real> alpha_;
    std::vector<Real> alpha_bar_;
};

/// beta_k = beta_1 + (k - 1) (beta_K - beta_1) / (K - 1).
VarianceSchedule make_linear_schedule(int K, Real beta_1, Real beta_K);

/// Learned noise predictor f_theta(F_k, k). One timestep per row.
class NoiseModel {
public:
    virtual ~NoiseModel() = default;
    virtual Var predict(const Var& f_k, std::span<const int> ks) const = 0;
};

/// sqrt(1 - beta_k) f_prev + sqrt(beta_k) noise.
Tensor diffuse_one_step(const Tensor& f_prev, int k, const VarianceSchedule& sched, const Tensor& noise);

/// Closed-form k-step marginal: sqrt(alpha_bar_k) f0 + sqrt(1 - alpha_bar_k) noise.
Tensor diffuse_k_steps(const Tensor& f0, int k, const VarianceSchedule& sched, const Tensor& noise);

/// (1 / sqrt(alpha_k)) (f_k - beta_k / sqrt(1 - alpha_bar_k) f_theta(f_k, k)).
Var reverse_mean(const Var& f_k, int k, const VarianceSchedule& sched, const NoiseModel& f_theta);

/// reverse_mean + sqrt(beta_k) noise for k > 1; noise is ignored at k = 1.
Var reverse_one_step(const Var& f_k, int k, const VarianceSchedule& sched, const NoiseModel& f_theta,
                     const Tensor& noise);

/// Epsilon-prediction loss for explicit per-row steps and noise:
/// mean over rows of ||noise - f_theta(f_k, k)||^2 / d.
Var reverse_loss(const Tensor& features, const NoiseModel& f_theta, const VarianceSchedule& sched,
                 std::span<const int> ks, const Tensor& noise);

/// Draws per row k ~ U{1..K} (all rows first), then the noise tensor, and
/// evaluates the loss above.
Var reverse_loss(const Tensor& features, const NoiseModel& f_theta, const VarianceSchedule& sched, num::Rng& rng);

}  // namespace dadapt::diffusion
