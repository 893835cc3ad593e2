#pragma once

#include <ostream>

namespace dadapt::tools {

/// Finite-difference check of every differentiable op and each model over
/// `seeds` seeds; prints one line per case. True when all pass.
bool run_grad_suite(int seeds, std::ostream& log);

/// Schedule identities and Monte-Carlo properties of the diffusion
/// operators; prints one line per property. True when all pass.
bool run_selftest(long trials, std::ostream& log);

}  // namespace dadapt::tools
