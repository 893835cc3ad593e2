#include "dadapt/dad.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace dadapt::dad {

using models::DomainTag;
using num::Tensor;
using num::Var;

DadModule::DadModule(models::NoisePredictor f_theta, diffusion::VarianceSchedule sched)
    : f_theta_(std::move(f_theta)), sched_(std::move(sched)) {
    if (f_theta_.max_k() != sched_.K()) {
        throw std::invalid_argument("DadModule: predictor trained for K=" + std::to_string(f_theta_.max_k()) +
                                    " but schedule has K=" + std::to_string(sched_.K()));
    }
}

void DadModule::set_grad_window(int n) {
    if (n < 0) throw std::invalid_argument("DadModule: negative gradient window");
    grad_window_ = n;
}

void DadModule::export_params(const std::string& prefix, models::ParamTable& table) const {
    f_theta_.export_params(prefix + ".f_theta", table);
    table.put(prefix + ".beta", Tensor(num::Shape{sched_.betas().size()}, sched_.betas()));
}

DadModule DadModule::import_params(const std::string& prefix, const models::ParamTable& table) {
    auto np = models::NoisePredictor::import_params(prefix + ".f_theta", table);
    const Tensor& b = table.get(prefix + ".beta");
    DadModule dad(std::move(np), diffusion::VarianceSchedule(std::vector<num::Real>(b.data().begin(), b.data().end())));
    dad.set_frozen(true);
    return dad;
}

FeatureBatch simulate_transitional(const DadModule& dad, const FeatureBatch& f_s, int k, Rng& rng) {
    if (f_s.tag.kind != DomainTag::Kind::source) {
        throw std::invalid_argument("simulate_transitional: expected a source batch, got " + f_s.tag.str());
    }
    if (k < 0 || k > dad.K()) {
        throw std::out_of_range("simulate_transitional: k=" + std::to_string(k) + " outside [0, " +
                                std::to_string(dad.K()) + "]");
    }
    if (k == 0) return f_s;

    const auto& sched = dad.schedule();
    const Tensor& f0 = f_s.features.value();
    const Tensor eps = num::gaussian(rng, f0.shape());
    Var f = Var::constant(diffusion::diffuse_k_steps(f0, k, sched, eps));

    const int window = dad.grad_window();
    for (int j = k; j >= 1; --j) {
        Tensor noise = j > 1 ? num::gaussian(rng, f0.shape()) : Tensor(f0.shape());
        if (window > 0 && j > window) {
            num::NoGradGuard no_grad;
            f = diffusion::reverse_one_step(f, j, sched, dad.predictor(), noise);
        } else {
            f = diffusion::reverse_one_step(f, j, sched, dad.predictor(), noise);
        }
    }
    return FeatureBatch(std::move(f), f_s.labels, DomainTag::transitional(k));
}

std::vector<double> pretrain_target_reverse(DadModule& dad, models::BatchSampler& target, std::size_t batch_size,
                                            long steps, num::PolySgd& opt, Rng& rng) {
    if (steps < 0) throw std::invalid_argument("pretrain_target_reverse: negative step count");
    if (dad.frozen()) throw std::logic_error("pretrain_target_reverse: module is frozen");
    if (target.pool().tag.kind != DomainTag::Kind::target) {
        throw std::invalid_argument("pretrain_target_reverse: expected target batches, got " + target.pool().tag.str());
    }
    auto params = dad.parameters();
    std::vector<double> trace;
    trace.reserve(std::size_t(steps));
    for (long s = 0; s < steps; ++s) {
        const FeatureBatch batch = target.next(batch_size);
        const Var loss = diffusion::reverse_loss(batch.features.value(), dad.predictor(), dad.schedule(), rng);
        loss.backward();
        opt.step(params);
        trace.push_back(double(loss.value().item()));
    }
    return trace;
}

std::vector<std::pair<int, double>> dad_distance_profile(const DadModule& dad, const FeatureBatch& f_s,
                                                         const FeatureBatch& f_t, std::span<const int> ks, Rng& rng,
                                                         const metrics::MmdConfig& cfg) {
    if (ks.empty()) throw std::invalid_argument("dad_distance_profile: empty step list");
    num::NoGradGuard no_grad;
    std::vector<std::pair<int, double>> out;
    out.reserve(ks.size());
    for (int k : ks) {
        const FeatureBatch sim = simulate_transitional(dad, f_s, k, rng);
        out.emplace_back(k, metrics::rbf_mmd2(sim.features.value(), f_t.features.value(), cfg));
    }
    return out;
}

}  // namespace dadapt::dad
