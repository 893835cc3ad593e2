#pragma once

#include <span>
#include <utility>
#include <vector>

#include "dadapt/metrics.hpp"
#include "dadapt/models.hpp"
#include "dadapt/optim.hpp"

namespace dadapt::dad {

using models::FeatureBatch;
using num::Rng;

/// Domain-adaptive diffusion: the fixed forward schedule plus the learned
/// reverse operator.
class DadModule {
public:
    DadModule() = default;
    DadModule(models::NoisePredictor f_theta, diffusion::VarianceSchedule sched);

    int K() const { return sched_.K(); }
    const diffusion::VarianceSchedule& schedule() const { return sched_; }
    models::NoisePredictor& predictor() { return f_theta_; }
    const models::NoisePredictor& predictor() const { return f_theta_; }
    std::vector<num::Var> parameters() const { return f_theta_.parameters(); }

    bool frozen() const { return f_theta_.frozen(); }
    void set_frozen(bool on) { f_theta_.set_frozen(on); }
    std::uint64_t checksum() const { return f_theta_.checksum(); }

    /// Backprop reaches only the last `n` reverse steps; 0 means all.
    int grad_window() const { return grad_window_; }
    void set_grad_window(int n);

    void export_params(const std::string& prefix, models::ParamTable& table) const;
    static DadModule import_params(const std::string& prefix, const models::ParamTable& table);

private:
    models::NoisePredictor f_theta_;
    diffusion::VarianceSchedule sched_;
    int grad_window_ = 0;
};

/// F^{D_k} = Rev(Dif(F^S, k), k). k = 0 returns the input unchanged.
/// Noise order: one [n x d] draw for the closed-form diffusion, then one per
/// reverse step k, k-1, ..., 2 (step 1 adds none). Output is tagged
/// transitional(k), carries the source labels, and stays on the tape when
/// the module is trainable.
FeatureBatch simulate_transitional(const DadModule& dad, const FeatureBatch& f_s, int k, Rng& rng);

/// `steps` SGD iterations on the reverse loss over target batches. Returns
/// the per-step loss.
std::vector<double> pretrain_target_reverse(DadModule& dad, models::BatchSampler& target, std::size_t batch_size,
                                            long steps, num::PolySgd& opt, Rng& rng);

/// RBF-MMD^2(simulate_transitional(f_s, k), f_t) for each k.
std::vector<std::pair<int, double>> dad_distance_profile(const DadModule& dad, const FeatureBatch& f_s,
                                                         const FeatureBatch& f_t, std::span<const int> ks, Rng& rng,
                                                         const metrics::MmdConfig& cfg = {});

}  // namespace dadapt::dad
