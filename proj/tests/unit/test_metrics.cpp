#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dadapt/metrics.hpp"
#include "dadapt/models.hpp"
#include "helpers.hpp"

using namespace dadapt;
using num::Rng;
using num::Tensor;

namespace {

double sqdist(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double s = 0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        const double d = double(a.at(i, c)) - double(b.at(j, c));
        s += d * d;
    }
    return s;
}

double naive_median_distance(const Tensor& x, const Tensor& y) {
    std::vector<std::pair<const Tensor*, std::size_t>> pool;
    for (std::size_t i = 0; i < x.rows(); ++i) pool.emplace_back(&x, i);
    for (std::size_t i = 0; i < y.rows(); ++i) pool.emplace_back(&y, i);
    std::vector<double> d;
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (std::size_t j = i + 1; j < pool.size(); ++j)
            d.push_back(std::sqrt(sqdist(*pool[i].first, pool[i].second, *pool[j].first, pool[j].second)));
    std::sort(d.begin(), d.end());
    const std::size_t m = d.size();
    return m % 2 ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
}

double naive_kernel_mean(const Tensor& a, const Tensor& b, double sigma) {
    double s = 0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) s += std::exp(-sqdist(a, i, b, j) / (2 * sigma * sigma));
    return s / double(a.rows() * b.rows());
}

double naive_mmd2(const Tensor& x, const Tensor& y, double sigma) {
    return naive_kernel_mean(x, x, sigma) + naive_kernel_mean(y, y, sigma) - 2 * naive_kernel_mean(x, y, sigma);
}

/// A one-layer classifier whose logits are the inputs themselves.
models::Classifier identity_classifier(std::size_t d) {
    models::Layer l{num::Var::parameter(Tensor::matrix(d, d)), num::Var::parameter(Tensor::matrix(1, d)), false};
    for (std::size_t i = 0; i < d; ++i) l.weight.mutable_value().at(i, i) = 1;
    return models::Classifier(models::Mlp(std::vector<models::Layer>{l}));
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("rbf_mmd2 matches a double-loop reference") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const Tensor x = num::gaussian(rng, {17, 3});
        Tensor y = num::gaussian(rng, {23, 3});
        for (auto& v : y.storage()) v += 0.5;
        const double sigma = naive_median_distance(x, y);
        CHECK(metrics::median_heuristic_bandwidth(x, y) == doctest::Approx(sigma).epsilon(1e-12));
        CHECK(std::abs(metrics::rbf_mmd2(x, y) - naive_mmd2(x, y, sigma)) < 1e-10);
        CHECK(std::abs(metrics::rbf_mmd2(x, y, {0.7}) - naive_mmd2(x, y, 0.7)) < 1e-10);
    }
}

TEST_CASE("rbf_mmd2: self distance, symmetry and non-negativity") {
    Rng rng(9);
    const Tensor x = num::gaussian(rng, {30, 2});
    CHECK(metrics::rbf_mmd2(x, x) < 1e-12);
    for (int i = 0; i < 20; ++i) {
        const Tensor a = num::gaussian(rng, {10, 2});
        const Tensor b = num::gaussian(rng, {12, 2});
        CHECK(metrics::rbf_mmd2(a, b) == metrics::rbf_mmd2(b, a));
        CHECK(metrics::rbf_mmd2(a, b) >= 0);
    }
}

TEST_CASE("rbf_mmd2: far-apart clusters lose the cross term") {
    Rng rng(10);
    const Tensor x = num::gaussian(rng, {20, 2});
    Tensor y = num::gaussian(rng, {20, 2});
    for (std::size_t i = 0; i < y.rows(); ++i) y.at(i, 0) += 1000;
    const double sigma = 1.5;
    const double within = naive_kernel_mean(x, x, sigma) + naive_kernel_mean(y, y, sigma);
    CHECK(naive_kernel_mean(x, y, sigma) == 0.0);
    CHECK(std::abs(metrics::rbf_mmd2(x, y, {sigma}) - within) < 1e-10);
}

TEST_CASE("rbf_mmd2 rejects tiny or mismatched samples") {
    CHECK_THROWS(metrics::rbf_mmd2(Tensor::matrix(1, 2), Tensor::matrix(5, 2)));
    CHECK_THROWS(metrics::rbf_mmd2(Tensor::matrix(5, 2), Tensor::matrix(1, 2)));
    CHECK_THROWS_AS(metrics::rbf_mmd2(Tensor::matrix(5, 2), Tensor::matrix(5, 3)), num::ShapeError);
    CHECK_THROWS(metrics::rbf_mmd2(Tensor::matrix(5, 2), Tensor::matrix(5, 2), {0.0}));
}

TEST_CASE("accuracy: oracle, tie-break and invariance") {
    Rng rng(11);
    domains::LabeledDataset d;
    d.classes = 3;
    d.points = Tensor::matrix(6, 3);
    d.labels = {0, 1, 2, 2, 1, 0};
    for (std::size_t i = 0; i < 6; ++i) d.points.at(i, std::size_t(d.labels[i])) = 1;
    const models::FeatureExtractor fe(models::Mlp(std::vector<models::Layer>{
        {num::Var::parameter(Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})), num::Var::parameter(Tensor::matrix(1, 3)),
         false}}));
    CHECK(metrics::accuracy(identity_classifier(3), fe, d) == 1.0);

    const Tensor zeros = Tensor::matrix(4, 2);
    CHECK(metrics::accuracy_from_logits(zeros, std::vector<int>{0, 1, 0, 1}) == 0.5);

    const Tensor logits = num::gaussian(rng, {50, 4});
    std::vector<int> y(50);
    for (auto& v : y) v = int(rng.uniform_int(4));
    const double base = metrics::accuracy_from_logits(logits, y);
    Tensor shifted = logits, squashed = logits;
    for (auto& v : shifted.storage()) v += 7.5;
    for (auto& v : squashed.storage()) v = std::tanh(v) * 3 + 1;
    CHECK(metrics::accuracy_from_logits(shifted, y) == base);
    CHECK(metrics::accuracy_from_logits(squashed, y) == base);

    CHECK_THROWS(metrics::accuracy_from_logits(Tensor::matrix(0, 2), std::vector<int>{}));
}

}  // TEST_SUITE
