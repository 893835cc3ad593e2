#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dadapt/autograd.hpp"
#include "dadapt/rng.hpp"

namespace testutil {

using dadapt::num::Real;
using dadapt::num::Tensor;
using dadapt::num::Var;

/// Central differences of a scalar function of one leaf, entry by entry.
/// Kept separate from the library's grad_check so the two can disagree.
inline Tensor numeric_grad(Var& leaf, const std::function<double()>& f, double h = 1e-6) {
    Tensor g(leaf.shape());
    auto& v = leaf.mutable_value();
    for (std::size_t i = 0; i < v.numel(); ++i) {
        const Real keep = v[i];
        v[i] = keep + Real(h);
        const double up = f();
        v[i] = keep - Real(h);
        const double down = f();
        v[i] = keep;
        g[i] = Real((up - down) / (2 * h));
    }
    return g;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

inline Tensor filled(std::size_t r, std::size_t c, const std::function<Real(std::size_t, std::size_t)>& f) {
    Tensor t = Tensor::matrix(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t.at(i, j) = f(i, j);
    return t;
}

struct Moments {
    double mean = 0;
    double var = 0;
};

inline Moments moments(std::span<const Real> xs) {
    Moments m;
    for (auto x : xs) m.mean += double(x);
    m.mean /= double(xs.size());
    for (auto x : xs) m.var += (double(x) - m.mean) * (double(x) - m.mean);
    m.var /= double(xs.size() - 1);
    return m;
}

}  // namespace testutil
