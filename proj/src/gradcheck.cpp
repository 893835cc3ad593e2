#include "dadapt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dadapt/rng.hpp"

namespace dadapt::num {

namespace {

double eval_loss(const std::function<Var()>& loss_fn) {
    const Var loss = loss_fn();
    const double v = double(loss.value().item());
    if (!std::isfinite(v)) throw NonFiniteError("grad_check: non-finite loss");
    return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Var()>& loss_fn, std::span<Var> params, const GradCheckOptions& opts) {
    for (auto& p : params) p.zero_grad();
    {
        const Var loss = loss_fn();
        if (!std::isfinite(double(loss.value().item()))) throw NonFiniteError("grad_check: non-finite loss");
        loss.backward();
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        analytic.push_back(p.grad());
        p.zero_grad();
    }

    // Flat (param, entry) index space.
    std::vector<std::pair<std::size_t, std::size_t>> entries;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i].value().numel(); ++j) entries.emplace_back(i, j);
    }
    if (entries.size() > opts.max_entries) {
        Rng rng(opts.sample_seed);
        // Partial Fisher-Yates for a uniform subset.
        for (std::size_t i = 0; i < opts.max_entries; ++i) {
            const std::size_t j = i + std::size_t(rng.uniform_int(std::uint64_t(entries.size() - i)));
            std::swap(entries[i], entries[j]);
        }
        entries.resize(opts.max_entries);
    }

    GradCheckResult result;
    for (const auto& [pi, ej] : entries) {
        Real& w = params[pi].mutable_value()[ej];
        const Real orig = w;
        w = orig + Real(opts.eps);
        const double up = eval_loss(loss_fn);
        w = orig - Real(opts.eps);
        const double down = eval_loss(loss_fn);
        w = orig;
        const double numeric = (up - down) / (2.0 * opts.eps);
        const double a = double(analytic[pi][ej]);
        const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
        result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
        ++result.entries_checked;
    }
    return result;
}

}  // namespace dadapt::num
