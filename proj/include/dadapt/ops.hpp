#pragma once

#include <span>

#include "dadapt/autograd.hpp"

namespace dadapt::num {

// Differentiable ops. Every op checks shapes (ShapeError) and rejects
// non-finite results (NonFiniteError).

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// x[n x m] + row[1 x m], broadcast over rows.
Var add_row(const Var& x, const Var& row);
Var scale(const Var& a, Real c);
/// alpha * a + beta * b.
Var axpby(Real alpha, const Var& a, Real beta, const Var& b);
Var leaky_relu(const Var& x, Real slope = Real(0.01));
/// [n x p] ++ [n x q] -> [n x (p + q)].
Var concat_cols(const Var& a, const Var& b);
Var sum(const Var& x);
Var mean(const Var& x);
/// Mean over all entries of (a - b)^2.
Var mse(const Var& a, const Var& b);
/// Mean over the batch of -log softmax(logits)[label], max-subtracted.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

/// Forward-only row softmax, for reporting.
Tensor softmax_rows(const Tensor& logits);
/// Index of the largest entry per row; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace dadapt::num
