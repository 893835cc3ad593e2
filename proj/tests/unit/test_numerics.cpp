#include <doctest.h>

#include <cmath>

#include "dadapt/gradcheck.hpp"
#include "dadapt/ops.hpp"
#include "dadapt/optim.hpp"
#include "helpers.hpp"

using namespace dadapt::num;
using testutil::max_abs_diff;
using testutil::numeric_grad;

TEST_SUITE("numerics") {

TEST_CASE("tensor shape and storage agree") {
    const Tensor t(Shape{3, 4}, 2.0);
    CHECK(t.numel() == 12);
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 4);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<Real>{1, 2, 3}), ShapeError);
    CHECK(Tensor::scalar(5).item() == 5);
}

TEST_CASE("matmul: identity and hand arithmetic") {
    const Var eye = Var::constant(Tensor::from_rows({{1, 0}, {0, 1}}));
    const Var b = Var::constant(Tensor::from_rows({{5, 6}, {7, 8}}));
    CHECK(matmul(eye, b).value() == b.value());
    const Var a = Var::constant(Tensor::from_rows({{1, 2}, {3, 4}}));
    CHECK(matmul(a, b).value() == Tensor::from_rows({{19, 22}, {43, 50}}));
    CHECK_THROWS_AS(matmul(a, Var::constant(Tensor::matrix(3, 2))), ShapeError);
}

TEST_CASE("matmul: gradient of sum(A B) against central differences") {
    Rng rng(3);
    Var a = Var::parameter(gaussian(rng, {3, 4}));
    const Var b = Var::constant(gaussian(rng, {4, 2}));
    sum(matmul(a, b)).backward();
    const Tensor numeric = numeric_grad(a, [&] { return double(sum(matmul(a, b)).value().item()); }, 1e-5);
    // d/dA sum(AB) has the closed form 1 B^T, so check that too.
    Tensor closed = Tensor::matrix(3, 4);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) closed.at(i, j) = b.value().at(j, 0) + b.value().at(j, 1);
    for (std::size_t i = 0; i < closed.numel(); ++i) {
        CHECK(std::abs(a.grad()[i] - numeric[i]) <= 1e-6 * std::max(1.0, std::abs(double(numeric[i]))));
        CHECK(a.grad()[i] == doctest::Approx(closed[i]).epsilon(1e-14));
    }
}

TEST_CASE("softmax_cross_entropy: uniform, saturated and gradient") {
    const Var uniform = Var::constant(Tensor::matrix(2, 4, 0.3));
    const std::vector<int> y{1, 3};
    CHECK(softmax_cross_entropy(uniform, y).value().item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Tensor sat = Tensor::matrix(1, 3);
    sat.at(0, 2) = 50;
    CHECK(softmax_cross_entropy(Var::constant(sat), std::vector<int>{2}).value().item() < 1e-9);

    Rng rng(7);
    Var z = Var::parameter(gaussian(rng, {8, 3}));
    std::vector<int> labels(8);
    for (auto& l : labels) l = int(rng.uniform_int(3));
    softmax_cross_entropy(z, labels).backward();
    const Tensor numeric = numeric_grad(z, [&] { return double(softmax_cross_entropy(z, labels).value().item()); }, 1e-5);
    double worst = 0;
    for (std::size_t i = 0; i < numeric.numel(); ++i) {
        const double denom = std::max({std::abs(double(z.grad()[i])), std::abs(double(numeric[i])), 1e-8});
        worst = std::max(worst, std::abs(double(z.grad()[i] - numeric[i])) / denom);
    }
    CHECK(worst < 1e-6);

    CHECK_THROWS(softmax_cross_entropy(Var::constant(Tensor::matrix(1, 3)), std::vector<int>{3}));
    CHECK_THROWS(softmax_cross_entropy(Var::constant(Tensor::matrix(1, 1)), std::vector<int>{0}));
}

TEST_CASE("ops reject non-finite results") {
    const Var big = Var::constant(Tensor::matrix(1, 1, 1e308));
    CHECK_THROWS_AS(add(big, big), NonFiniteError);
    CHECK_THROWS_AS(Tensor::from_rows({{std::nan("")}}).require_finite("x"), NonFiniteError);
}

TEST_CASE("gradients accumulate across uses of a leaf") {
    Var x = Var::parameter(Tensor::from_rows({{2.0}}));
    sum(add(mul(x, x), x)).backward();  // d/dx (x^2 + x) = 2x + 1
    CHECK(x.grad().item() == 5.0);
}

TEST_CASE("NoGradGuard records no tape") {
    Var x = Var::parameter(Tensor::from_rows({{1.0, 2.0}}));
    Var y;
    {
        NoGradGuard guard;
        CHECK(NoGradGuard::active());
        y = sum(mul(x, x));
    }
    CHECK_FALSE(NoGradGuard::active());
    CHECK_FALSE(y.requires_grad());
    CHECK(y.value().item() == 5.0);
}

TEST_CASE("sgd_momentum_step recurrences") {
    SUBCASE("plain gradient descent") {
        std::vector<Var> p{Var::parameter(Tensor::from_rows({{1.0, -2.0}}))};
        const std::vector<Tensor> g{Tensor::from_rows({{0.5, 4.0}})};
        SgdMomentumState st{0.0, 0.0, {}};
        sgd_momentum_step(p, g, st, 0.1);
        CHECK(p[0].value().at(0, 0) == doctest::Approx(1.0 - 0.05));
        CHECK(p[0].value().at(0, 1) == doctest::Approx(-2.0 - 0.4));
    }
    SUBCASE("pure momentum coast") {
        std::vector<Var> p{Var::parameter(Tensor::from_rows({{0.0}}))};
        SgdMomentumState st{0.9, 0.0, {Tensor::from_rows({{2.0}})}};
        sgd_momentum_step(p, std::vector<Tensor>{Tensor::from_rows({{0.0}})}, st, 0.1);
        CHECK(p[0].value().item() == doctest::Approx(-0.1 * 0.9 * 2.0));
    }
    SUBCASE("two steps, constant unit gradient") {
        std::vector<Var> p{Var::parameter(Tensor::from_rows({{0.0}}))};
        const std::vector<Tensor> g{Tensor::from_rows({{1.0}})};
        SgdMomentumState st{0.9, 0.0, {}};
        sgd_momentum_step(p, g, st, 0.1);
        sgd_momentum_step(p, g, st, 0.1);
        CHECK(p[0].value().item() == doctest::Approx(-0.29).epsilon(1e-12));
    }
    SUBCASE("coupled weight decay enters the velocity") {
        std::vector<Var> p{Var::parameter(Tensor::from_rows({{2.0}}))};
        SgdMomentumState st{0.0, 0.5, {}};
        sgd_momentum_step(p, std::vector<Tensor>{Tensor::from_rows({{0.0}})}, st, 0.1);
        CHECK(p[0].value().item() == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
    }
    SUBCASE("shape mismatch") {
        std::vector<Var> p{Var::parameter(Tensor::matrix(1, 2))};
        SgdMomentumState st;
        CHECK_THROWS_AS(sgd_momentum_step(p, std::vector<Tensor>{Tensor::matrix(2, 1)}, st, 0.1), ShapeError);
    }
}

TEST_CASE("optimizer step with lr = 0 is the identity") {
    Rng rng(11);
    std::vector<Var> p{Var::parameter(gaussian(rng, {3, 3})), Var::parameter(gaussian(rng, {1, 3}))};
    const Tensor a = p[0].value(), b = p[1].value();
    PolySgd opt(OptimSettings{0.0, 0.9, 0.05, 0.9}, 10);
    for (int i = 0; i < 3; ++i) {
        sum(add_row(matmul(p[0], p[0]), p[1])).backward();
        opt.step(p);
    }
    CHECK(p[0].value() == a);
    CHECK(p[1].value() == b);
}

TEST_CASE("poly_lr schedule") {
    CHECK(poly_lr(0.001, 0, 100, 0.9) == 0.001);
    CHECK(poly_lr(0.001, 100, 100, 0.9) == 0.0);
    CHECK(poly_lr(0.001, 50, 100, 0.9) == doctest::Approx(0.000536).epsilon(1e-3));
    CHECK(poly_lr(0.001, 50, 100, 0.9) == doctest::Approx(0.001 * std::pow(0.5, 0.9)).epsilon(1e-14));
    CHECK_THROWS(poly_lr(0.001, 101, 100, 0.9));
    Real prev = poly_lr(1.0, 0, 37, 0.9);
    for (long i = 1; i <= 37; ++i) {
        const Real cur = poly_lr(1.0, i, 37, 0.9);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("gaussian sampling") {
    Rng a(42), b(42), c(43);
    const Tensor ta = gaussian(a, {4, 5});
    CHECK(ta == gaussian(b, {4, 5}));
    CHECK_FALSE(ta == gaussian(c, {4, 5}));

    Rng big(1);
    const Tensor t = gaussian(big, {1000000, 1});
    const auto m = testutil::moments(t.data());
    CHECK(std::abs(m.mean) < 0.005);
    CHECK(std::abs(m.var - 1.0) < 0.01);
}

TEST_CASE("rng streams are fixed by seed and counter") {
    // SplitMix64 reference value for seed 0: mix64(0x9E3779B97F4A7C15).
    Rng r(0);
    CHECK(r.next_u64() == 0xE220A8397B1DCDAFull);
    Rng parent(5);
    const Rng s1 = parent.split(1), s1b = parent.split(1), s2 = parent.split(2);
    CHECK(parent.counter() == 0);
    Rng x = s1, y = s1b, z = s2;
    CHECK(x.next_u64() == y.next_u64());
    CHECK(Rng(s1).next_u64() != z.next_u64());
    Rng u(9);
    for (int i = 0; i < 1000; ++i) {
        const auto v = u.uniform_int(2, 5);
        CHECK((v >= 2 && v <= 5));
    }
}

TEST_CASE("grad_check harness") {
    Rng rng(2);
    std::vector<Var> w{Var::parameter(gaussian(rng, {1, 5}))};
    const Var x = Var::constant(gaussian(rng, {1, 5}));
    const auto linear = grad_check([&] { return sum(mul(w[0], x)); }, w);
    CHECK(linear.max_rel_error < 1e-10);
    CHECK(linear.entries_checked == 5);

    // Negative control: a product whose backward rule is off by a factor 2.
    const auto broken_mul = [](const Var& a, const Var& b) {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
        return Var::make(out, {a, b}, [](Node& self) {
            Node& pa = *self.parents[0];
            const Node& pb = *self.parents[1];
            if (!pa.requires_grad) return;
            Tensor& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += 2 * self.grad[i] * pb.value[i];
        });
    };
    const auto bad = grad_check([&] { return sum(broken_mul(w[0], x)); }, w);
    CHECK(bad.max_rel_error > 1e-2);

    std::vector<Var> one{Var::parameter(Tensor::from_rows({{1.0}}))};
    CHECK_THROWS_AS(grad_check([&] { return Var::constant(Tensor::scalar(std::nan(""))); }, one), NonFiniteError);
}

TEST_CASE("every op passes the finite-difference check over 10 seeds") {
    using Fn = std::function<Var(const Var&, const Var&)>;
    const std::vector<std::pair<const char*, Fn>> binary{
        {"add", [](const Var& a, const Var& b) { return add(a, b); }},
        {"sub", [](const Var& a, const Var& b) { return sub(a, b); }},
        {"mul", [](const Var& a, const Var& b) { return mul(a, b); }},
        {"axpby", [](const Var& a, const Var& b) { return axpby(0.3, a, 2.0, b); }},
        {"concat_cols", [](const Var& a, const Var& b) { return concat_cols(a, b); }},
        {"mse", [](const Var& a, const Var& b) { return mse(a, b); }},
        {"matmul_t", [](const Var& a, const Var& b) { return matmul(a, concat_cols(b, b)); }},
        {"leaky_relu", [](const Var& a, const Var& b) { return mul(leaky_relu(a, 0.2), b); }},
        {"scale_mean", [](const Var& a, const Var& b) { return scale(mean(mul(a, b)), 3.0); }},
        {"add_row", [](const Var& a, const Var& b) { return add_row(b, a); }},
        {"softmax_ce", [](const Var& a, const Var& b) {
             return softmax_cross_entropy(add(a, b), std::vector<int>{0, 2, 1});
         }},
    };
    for (const auto& [name, op] : binary) {
        CAPTURE(name);
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            Rng rng(seed);
            const std::size_t inner = std::string(name) == "matmul_t" ? 6 : 3;
            std::vector<Var> ps{Var::parameter(gaussian(rng, {3, inner})), Var::parameter(gaussian(rng, {inner, 3}))};
            if (std::string(name) == "add_row") ps[0] = Var::parameter(gaussian(rng, {1, 3}));
            Rng wr = rng.split(9);
            const Var w = Var::constant(gaussian(wr, op(ps[0], ps[1]).shape()));
            const auto res = grad_check([&] { return sum(mul(op(ps[0], ps[1]), w)); }, ps);
            CHECK(res.max_rel_error < 1e-4);
        }
    }
}

}  // TEST_SUITE
