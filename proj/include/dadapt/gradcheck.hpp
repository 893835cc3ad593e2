#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "dadapt/autograd.hpp"

namespace dadapt::num {

struct GradCheckResult {
    double max_rel_error = 0;
    std::size_t entries_checked = 0;
};

struct GradCheckOptions {
    double eps = 1e-5;
    /// Above this many parameter entries a uniform subset is checked.
    std::size_t max_entries = 2000;
    std::uint64_t sample_seed = 0;
    /// Denominator floor for the relative error.
    double floor = 1e-6;
};

/// Compares reverse-mode gradients of `loss_fn` against central finite
/// differences, entry by entry. `loss_fn` must rebuild the graph from the
/// current values of `params` on every call.
///
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
/// Throws NonFiniteError when the loss is not finite.
GradCheckResult grad_check(const std::function<Var()>& loss_fn, std::span<Var> params, const GradCheckOptions& opts = {});

}  // namespace dadapt::num
