#include <doctest.h>

#include <array>
#include <cmath>
#include <numeric>

#include "dadapt/dad.hpp"
#include "dadapt/domains.hpp"
#include "dadapt/metrics.hpp"
#include "dadapt/ops.hpp"
#include "helpers.hpp"

using namespace dadapt;
using dad::DadModule;
using models::DomainTag;
using models::FeatureBatch;
using num::Rng;
using num::Tensor;
using num::Var;

namespace {

DadModule make_dad(int K, std::size_t dim, std::size_t hidden, std::size_t layers, std::uint64_t seed,
                   double beta_K = 0.02) {
    Rng rng(seed);
    return DadModule(models::NoisePredictor(dim, hidden, layers, 16, K, rng),
                     diffusion::make_linear_schedule(K, 1e-4, beta_K));
}

FeatureBatch source_batch(const Tensor& x, std::size_t classes = 2) {
    std::vector<int> y(x.rows());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = int(i % classes);
    return FeatureBatch(Var::constant(x), y, DomainTag::source());
}

FeatureBatch target_batch(const Tensor& x) { return FeatureBatch(Var::constant(x), std::nullopt, DomainTag::target()); }

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t n) {
    return std::accumulate(v.begin() + std::ptrdiff_t(from), v.begin() + std::ptrdiff_t(from + n), 0.0) / double(n);
}

struct MoonsPair {
    Tensor source, target;
};

MoonsPair standardized_moons(std::size_t n, std::uint64_t seed) {
    const auto s = domains::gen_two_moons(n, 0.08, seed);
    const std::array<double, 2> t{0.0, 0.0};
    const auto tg = domains::apply_shift(domains::gen_two_moons(n, 0.08, seed + 100), 50, t, 1);
    const auto st = domains::Standardizer::fit(s.points);
    return {st.apply(s).points, st.apply(tg).points};
}

/// Pretrains a small DAD on the rotated-moons target.
DadModule trained_moons_dad(const Tensor& target, std::uint64_t seed) {
    DadModule dad = make_dad(50, 2, 96, 3, seed);
    models::BatchSampler sampler(target_batch(target), seed + 1);
    num::PolySgd opt(num::OptimSettings{0.01, 0.9, 0.0005, 0.9}, 4000);
    Rng rng(seed + 2);
    dad::pretrain_target_reverse(dad, sampler, 64, 4000, opt, rng);
    dad.set_frozen(true);
    return dad;
}

}  // namespace

TEST_SUITE("dad") {

TEST_CASE("k = 0 is the identity and labels are inherited at every k") {
    const DadModule dad = make_dad(10, 3, 16, 2, 1);
    Rng rng(2);
    const FeatureBatch src = source_batch(num::gaussian(rng, {9, 3}));
    const FeatureBatch same = dad::simulate_transitional(dad, src, 0, rng);
    CHECK(same.features.value() == src.features.value());
    CHECK(same.labels == src.labels);
    CHECK(same.tag == DomainTag::source());
    for (int k = 1; k <= 10; ++k) {
        const FeatureBatch sim = dad::simulate_transitional(dad, src, k, rng);
        CHECK(sim.labels == src.labels);
        CHECK(sim.tag == DomainTag::transitional(k));
        CHECK(sim.features.shape() == src.features.shape());
    }
}

TEST_CASE("simulate_transitional rejects bad k and non-source input") {
    const DadModule dad = make_dad(5, 2, 8, 1, 1);
    Rng rng(3);
    const Tensor x = num::gaussian(rng, {4, 2});
    CHECK_THROWS_AS(dad::simulate_transitional(dad, source_batch(x), 6, rng), std::out_of_range);
    CHECK_THROWS_AS(dad::simulate_transitional(dad, source_batch(x), -1, rng), std::out_of_range);
    CHECK_THROWS_AS(dad::simulate_transitional(dad, target_batch(x), 2, rng), std::invalid_argument);
    const FeatureBatch trans(Var::constant(x), std::vector<int>{0, 1, 0, 1}, DomainTag::transitional(2));
    CHECK_THROWS_AS(dad::simulate_transitional(dad, trans, 2, rng), std::invalid_argument);
}

TEST_CASE("module construction checks the predictor range") {
    Rng rng(1);
    CHECK_THROWS(DadModule(models::NoisePredictor(2, 4, 1, 4, 9, rng), diffusion::make_linear_schedule(10, 1e-4, 0.02)));
}

TEST_CASE("frozen module: reproducible and off the tape") {
    DadModule dad = make_dad(8, 2, 16, 2, 4);
    dad.set_frozen(true);
    Rng data(5);
    const FeatureBatch src = source_batch(num::gaussian(data, {6, 2}));
    Rng a(77), b(77);
    const auto x = dad::simulate_transitional(dad, src, 8, a);
    const auto y = dad::simulate_transitional(dad, src, 8, b);
    CHECK(x.features.value() == y.features.value());
    CHECK_FALSE(x.features.requires_grad());
}

TEST_CASE("trainable module: the classification loss reaches every predictor parameter") {
    DadModule dad = make_dad(6, 2, 16, 2, 6);
    Rng rng(7);
    const auto snap = models::Classifier(2, 8, 1, 2, rng).snapshot();
    const FeatureBatch src = source_batch(num::gaussian(rng, {12, 2}));
    const auto sim = dad::simulate_transitional(dad, src, 6, rng);
    CHECK(sim.features.requires_grad());
    num::softmax_cross_entropy(snap.classify(sim), sim.require_labels()).backward();
    for (const auto& p : dad.parameters()) {
        double norm = 0;
        for (auto g : p.grad().data()) norm += double(g) * double(g);
        CHECK(norm > 0);
    }
    for (const auto& p : snap.parameters()) CHECK_FALSE(p.has_grad());
}

TEST_CASE("gradient window truncates backprop but not the forward value") {
    DadModule dad = make_dad(6, 2, 16, 2, 8);
    Rng data(9);
    const FeatureBatch src = source_batch(num::gaussian(data, {5, 2}));
    const auto grads = [&](int window, Tensor& value) {
        dad.set_grad_window(window);
        Rng noise(10);
        const auto sim = dad::simulate_transitional(dad, src, 6, noise);
        value = sim.features.value();
        num::sum(num::mul(sim.features, sim.features)).backward();
        std::vector<Tensor> g;
        for (auto p : dad.parameters()) {
            g.push_back(p.grad());
            p.zero_grad();
        }
        return g;
    };
    Tensor v_full, v_one;
    const auto g_full = grads(0, v_full);
    const auto g_one = grads(1, v_one);
    CHECK(v_full == v_one);
    CHECK_FALSE(g_full.front() == g_one.front());
    CHECK_THROWS(dad.set_grad_window(-1));
}

TEST_CASE("untrained predictor at k = K lands far from the source") {
    const DadModule dad = make_dad(600, 2, 128, 3, 11);
    const auto moons = standardized_moons(1000, 12);
    std::vector<std::size_t> a(500), b(500);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 500);
    const FeatureBatch src = source_batch(moons.source.gather_rows(a));
    Rng rng(13);
    const Tensor out = [&] {
        num::NoGradGuard ng;
        return dad::simulate_transitional(dad, src, 600, rng).features.value();
    }();
    const double far = metrics::rbf_mmd2(out, src.features.value());
    const double resample = metrics::rbf_mmd2(moons.source.gather_rows(b), src.features.value());
    CHECK(far > resample);
}

TEST_CASE("pretraining: zero steps, errors and finiteness") {
    DadModule dad = make_dad(20, 2, 16, 2, 14);
    Rng rng(15);
    models::BatchSampler tgt(target_batch(num::gaussian(rng, {100, 2})), 1);
    num::PolySgd opt(num::OptimSettings{}, 10);
    const auto before = dad.checksum();
    CHECK(dad::pretrain_target_reverse(dad, tgt, 16, 0, opt, rng).empty());
    CHECK(dad.checksum() == before);
    CHECK_THROWS(dad::pretrain_target_reverse(dad, tgt, 16, -1, opt, rng));

    models::BatchSampler src(source_batch(num::gaussian(rng, {100, 2})), 1);
    CHECK_THROWS(dad::pretrain_target_reverse(dad, src, 16, 1, opt, rng));

    const auto trace = dad::pretrain_target_reverse(dad, tgt, 16, 10, opt, rng);
    CHECK(trace.size() == 10);
    for (double v : trace) CHECK(std::isfinite(v));
    CHECK(dad.checksum() != before);

    dad.set_frozen(true);
    CHECK_THROWS_AS(dad::pretrain_target_reverse(dad, tgt, 16, 1, opt, rng), std::logic_error);
}

TEST_CASE("pretraining on a fixed Gaussian target halves the loss") {
    double first = 0, last = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        DadModule dad = make_dad(600, 2, 64, 2, seed);
        Rng data(seed + 10);
        Tensor x = num::gaussian(data, {2000, 2});
        for (std::size_t i = 0; i < x.rows(); ++i) {
            x.at(i, 0) = 1.5 + 0.2 * x.at(i, 0);
            x.at(i, 1) = -0.5 + 0.2 * x.at(i, 1);
        }
        models::BatchSampler tgt(target_batch(x), seed);
        num::PolySgd opt(num::OptimSettings{0.01, 0.9, 0.0005, 0.9}, 2000);
        Rng rng(seed + 20);
        const auto trace = dad::pretrain_target_reverse(dad, tgt, 64, 2000, opt, rng);
        for (double v : trace) REQUIRE(std::isfinite(v));
        first += mean_of(trace, 0, 100);
        last += mean_of(trace, 1900, 100);
    }
    CHECK(last <= 0.5 * first);
}

TEST_CASE("default optimizer settings keep the loss finite") {
    DadModule dad = make_dad(600, 2, 128, 3, 21);
    Rng data(22);
    models::BatchSampler tgt(target_batch(num::gaussian(data, {500, 2})), 2);
    num::PolySgd opt(num::OptimSettings{}, 300);
    Rng rng(23);
    for (double v : dad::pretrain_target_reverse(dad, tgt, 24, 300, opt, rng)) CHECK(std::isfinite(v));
}

TEST_CASE("distance profile") {
    const DadModule dad = make_dad(10, 2, 16, 2, 24);
    Rng rng(25);
    const FeatureBatch s = source_batch(num::gaussian(rng, {60, 2}));
    Tensor t = num::gaussian(rng, {60, 2});
    for (auto& v : t.storage()) v += 1;
    const FeatureBatch tg = target_batch(t);
    const std::array<int, 1> zero{0};
    const auto p = dad::dad_distance_profile(dad, s, tg, zero, rng);
    REQUIRE(p.size() == 1);
    CHECK(p[0].first == 0);
    CHECK(p[0].second == metrics::rbf_mmd2(s.features.value(), t));
    CHECK_THROWS(dad::dad_distance_profile(dad, s, tg, std::span<const int>{}, rng));
}

TEST_CASE("trained module moves the source toward the target in small steps") {
    const auto moons = standardized_moons(1000, 31);
    const DadModule dad = trained_moons_dad(moons.target, 32);
    std::vector<int> ks;
    for (int i = 0; i <= 20; ++i) ks.push_back(int(std::lround(50.0 * i / 20)));
    Rng rng(33);
    const auto prof = dad::dad_distance_profile(dad, source_batch(moons.source), target_batch(moons.target), ks, rng);
    const double gap = prof.front().second - prof.back().second;
    CHECK(gap > 0);
    double jump = 0;
    for (std::size_t i = 1; i < prof.size(); ++i) jump = std::max(jump, std::abs(prof[i].second - prof[i - 1].second));
    CHECK(jump < gap);
}

}  // TEST_SUITE
