#include "dadapt/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

namespace dadapt::num {
namespace {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

MatMap as_mat(Tensor& t) { return MatMap(t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }
ConstMatMap as_mat(const Tensor& t) {
    return ConstMatMap(t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols()));
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

Tensor& pgrad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
bool pneeds(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

Var finish(Tensor out, std::vector<Var> parents, BackwardFn fn, const char* op) {
    out.require_finite(op);
    return Var::make(std::move(out), std::move(parents), std::move(fn));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2(av, "matmul");
    require_rank2(bv, "matmul");
    if (av.cols() != bv.rows()) {
        throw ShapeError("matmul: inner dimensions disagree " + shape_str(av.shape()) + " * " + shape_str(bv.shape()));
    }
    Tensor out(Shape{av.rows(), bv.cols()});
    as_mat(out).noalias() = as_mat(av) * as_mat(bv);
    return finish(
        std::move(out), {a, b},
        [](Node& self) {
            auto g = as_mat(std::as_const(self.grad));
            const Tensor& av = self.parents[0]->value;
            const Tensor& bv = self.parents[1]->value;
            if (pneeds(self, 0)) as_mat(pgrad(self, 0)).noalias() += g * as_mat(bv).transpose();
            if (pneeds(self, 1)) as_mat(pgrad(self, 1)).noalias() += as_mat(av).transpose() * g;
        },
        "matmul");
}

Var add(const Var& a, const Var& b) { return axpby(Real(1), a, Real(1), b); }
Var sub(const Var& a, const Var& b) { return axpby(Real(1), a, Real(-1), b); }

Var axpby(Real alpha, const Var& a, Real beta, const Var& b) {
    require_same_shape(a.value(), b.value(), "axpby");
    const auto& x = a.value().storage();
    const auto& y = b.value().storage();
    Tensor out(a.shape());
    auto& o = out.storage();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = alpha * x[i] + beta * y[i];
    return finish(
        std::move(out), {a, b},
        [alpha, beta](Node& self) {
            const auto& g = self.grad.storage();
            if (pneeds(self, 0)) {
                auto& ga = pgrad(self, 0).storage();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += alpha * g[i];
            }
            if (pneeds(self, 1)) {
                auto& gb = pgrad(self, 1).storage();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += beta * g[i];
            }
        },
        "axpby");
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    const auto& x = a.value().storage();
    const auto& y = b.value().storage();
    Tensor out(a.shape());
    auto& o = out.storage();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
    return finish(
        std::move(out), {a, b},
        [](Node& self) {
            const auto& g = self.grad.storage();
            const auto& x = self.parents[0]->value.storage();
            const auto& y = self.parents[1]->value.storage();
            if (pneeds(self, 0)) {
                auto& ga = pgrad(self, 0).storage();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
            }
            if (pneeds(self, 1)) {
                auto& gb = pgrad(self, 1).storage();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
            }
        },
        "mul");
}

Var add_row(const Var& x, const Var& row) {
    const Tensor& xv = x.value();
    const Tensor& rv = row.value();
    require_rank2(xv, "add_row");
    if (rv.numel() != xv.cols()) {
        throw ShapeError("add_row: row " + shape_str(rv.shape()) + " does not broadcast over " + shape_str(xv.shape()));
    }
    Tensor out = xv;
    const Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>> rm(rv.data().data(), Eigen::Index(xv.cols()));
    as_mat(out).rowwise() += rm;
    return finish(
        std::move(out), {x, row},
        [](Node& self) {
            auto g = as_mat(std::as_const(self.grad));
            if (pneeds(self, 0)) as_mat(pgrad(self, 0)) += g;
            if (pneeds(self, 1)) {
                Tensor& gr = pgrad(self, 1);
                Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>> gm(gr.data().data(), Eigen::Index(gr.numel()));
                gm += g.colwise().sum();
            }
        },
        "add_row");
}

Var scale(const Var& a, Real c) {
    Tensor out = a.value();
    for (auto& v : out.storage()) v *= c;
    return finish(
        std::move(out), {a},
        [c](Node& self) {
            const auto& g = self.grad.storage();
            auto& ga = pgrad(self, 0).storage();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
        },
        "scale");
}

Var leaky_relu(const Var& x, Real slope) {
    Tensor out = x.value();
    for (auto& v : out.storage()) {
        if (v < Real(0)) v *= slope;
    }
    return finish(
        std::move(out), {x},
        [slope](Node& self) {
            const auto& g = self.grad.storage();
            const auto& xv = self.parents[0]->value.storage();
            auto& gx = pgrad(self, 0).storage();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] < Real(0) ? slope * g[i] : g[i];
        },
        "leaky_relu");
}

Var concat_cols(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2(av, "concat_cols");
    require_rank2(bv, "concat_cols");
    if (av.rows() != bv.rows()) {
        throw ShapeError("concat_cols: row counts differ " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    }
    const std::size_t n = av.rows(), p = av.cols(), q = bv.cols();
    Tensor out(Shape{n, p + q});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(av.data().data() + i * p, p, out.data().data() + i * (p + q));
        std::copy_n(bv.data().data() + i * q, q, out.data().data() + i * (p + q) + p);
    }
    return finish(
        std::move(out), {a, b},
        [n, p, q](Node& self) {
            const Real* g = self.grad.data().data();
            if (pneeds(self, 0)) {
                Real* ga = pgrad(self, 0).data().data();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
            }
            if (pneeds(self, 1)) {
                Real* gb = pgrad(self, 1).data().data();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
            }
        },
        "concat_cols");
}

Var sum(const Var& x) {
    Real s = 0;
    for (Real v : x.value().storage()) s += v;
    return finish(
        Tensor::scalar(s), {x},
        [](Node& self) {
            const Real g = self.grad[0];
            for (auto& v : pgrad(self, 0).storage()) v += g;
        },
        "sum");
}

Var mean(const Var& x) {
    const std::size_t n = x.value().numel();
    if (n == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(x), Real(1) / Real(n));
}

Var mse(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mse");
    const auto& x = a.value().storage();
    const auto& y = b.value().storage();
    if (x.empty()) throw ShapeError("mse: empty tensor");
    Real s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real d = x[i] - y[i];
        s += d * d;
    }
    const Real inv_n = Real(1) / Real(x.size());
    return finish(
        Tensor::scalar(s * inv_n), {a, b},
        [inv_n](Node& self) {
            const Real g = self.grad[0] * Real(2) * inv_n;
            const auto& x = self.parents[0]->value.storage();
            const auto& y = self.parents[1]->value.storage();
            if (pneeds(self, 0)) {
                auto& ga = pgrad(self, 0).storage();
                for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * (x[i] - y[i]);
            }
            if (pneeds(self, 1)) {
                auto& gb = pgrad(self, 1).storage();
                for (std::size_t i = 0; i < x.size(); ++i) gb[i] -= g * (x[i] - y[i]);
            }
        },
        "mse");
}

Tensor softmax_rows(const Tensor& logits) {
    require_rank2(logits, "softmax_rows");
    Tensor p = logits;
    const std::size_t n = p.rows(), c = p.cols();
    for (std::size_t i = 0; i < n; ++i) {
        Real* row = p.data().data() + i * c;
        const Real mx = *std::max_element(row, row + c);
        Real z = 0;
        for (std::size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (std::size_t j = 0; j < c; ++j) row[j] /= z;
    }
    return p;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    require_rank2(logits, "argmax_rows");
    const std::size_t n = logits.rows(), c = logits.cols();
    std::vector<int> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const Real* row = logits.data().data() + i * c;
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (row[j] > row[best]) best = j;
        }
        out[i] = int(best);
    }
    return out;
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
    const Tensor& lv = logits.value();
    require_rank2(lv, "softmax_cross_entropy");
    const std::size_t n = lv.rows(), c = lv.cols();
    if (c < 2) throw ShapeError("softmax_cross_entropy: need at least 2 classes");
    if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");
    if (labels.size() != n) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    }
    std::vector<int> y(labels.begin(), labels.end());
    for (int l : y) {
        if (l < 0 || std::size_t(l) >= c) {
            throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(l) + " outside [0, " +
                                    std::to_string(c) + ")");
        }
    }
    Real total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Real* row = lv.data().data() + i * c;
        const Real mx = *std::max_element(row, row + c);
        Real z = 0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        total += std::log(z) + mx - row[y[i]];
    }
    return finish(
        Tensor::scalar(total / Real(n)), {logits},
        [y = std::move(y), n, c](Node& self) {
            const Real g = self.grad[0] / Real(n);
            Tensor p = softmax_rows(self.parents[0]->value);
            Real* gl = pgrad(self, 0).data().data();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    const Real t = std::size_t(y[i]) == j ? Real(1) : Real(0);
                    gl[i * c + j] += g * (p.at(i, j) - t);
                }
            }
        },
        "softmax_cross_entropy");
}

}  // namespace dadapt::num
