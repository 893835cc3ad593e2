#include "diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dadapt/dad.hpp"
#include "dadapt/gradcheck.hpp"
#include "dadapt/ops.hpp"

namespace dadapt::tools {

using num::Rng;
using num::Tensor;
using num::Var;

namespace {

constexpr double kGradTol = 1e-4;

Var param(Rng& rng, std::size_t r, std::size_t c) { return Var::parameter(num::gaussian(rng, {r, c})); }

using Case = std::function<num::GradCheckResult(std::uint64_t seed)>;

num::GradCheckResult check(std::vector<Var> params, const std::function<Var()>& loss) {
    return num::grad_check(loss, params);
}

std::vector<std::pair<std::string, Case>> grad_cases() {
    std::vector<std::pair<std::string, Case>> cases;
    const auto binary = [](auto op) {
        return [op](std::uint64_t seed) {
            Rng rng(seed);
            Var a = param(rng, 3, 4), b = param(rng, 3, 4);
            Rng wr = rng.split(1);
            const Var w = Var::constant(num::gaussian(wr, op(a, b).shape()));
            return check({a, b}, [=] { return num::sum(num::mul(op(a, b), w)); });
        };
    };
    cases.emplace_back("add", binary([](const Var& a, const Var& b) { return num::add(a, b); }));
    cases.emplace_back("sub", binary([](const Var& a, const Var& b) { return num::sub(a, b); }));
    cases.emplace_back("mul", binary([](const Var& a, const Var& b) { return num::mul(a, b); }));
    cases.emplace_back("axpby", binary([](const Var& a, const Var& b) { return num::axpby(0.7, a, -1.3, b); }));
    cases.emplace_back("concat_cols", binary([](const Var& a, const Var& b) { return num::concat_cols(a, b); }));
    cases.emplace_back("mse", binary([](const Var& a, const Var& b) { return num::mse(a, b); }));
    cases.emplace_back("matmul", [](std::uint64_t seed) {
        Rng rng(seed);
        Var a = param(rng, 3, 5), b = param(rng, 5, 2);
        Rng wr = rng.split(1);
        const Var w = Var::constant(num::gaussian(wr, {3, 2}));
        return check({a, b}, [=] { return num::sum(num::mul(num::matmul(a, b), w)); });
    });
    cases.emplace_back("add_row", [](std::uint64_t seed) {
        Rng rng(seed);
        Var x = param(rng, 4, 3), row = param(rng, 1, 3);
        Rng wr = rng.split(1);
        const Var w = Var::constant(num::gaussian(wr, {4, 3}));
        return check({x, row}, [=] { return num::sum(num::mul(num::add_row(x, row), w)); });
    });
    const auto unary = [](auto op) {
        return [op](std::uint64_t seed) {
            Rng rng(seed);
            Var a = param(rng, 4, 3);
            Rng wr = rng.split(1);
            const Var w = Var::constant(num::gaussian(wr, {4, 3}));
            return check({a}, [=] { return num::sum(num::mul(op(a), w)); });
        };
    };
    cases.emplace_back("scale", unary([](const Var& a) { return num::scale(a, -2.5); }));
    cases.emplace_back("leaky_relu", unary([](const Var& a) { return num::leaky_relu(a, 0.1); }));
    cases.emplace_back("sum", [](std::uint64_t seed) {
        Rng rng(seed);
        Var a = param(rng, 4, 3);
        return check({a}, [=] { return num::sum(num::mul(a, a)); });
    });
    cases.emplace_back("mean", [](std::uint64_t seed) {
        Rng rng(seed);
        Var a = param(rng, 4, 3);
        return check({a}, [=] { return num::mean(num::mul(a, a)); });
    });
    cases.emplace_back("softmax_cross_entropy", [](std::uint64_t seed) {
        Rng rng(seed);
        Var z = param(rng, 6, 3);
        std::vector<int> y(6);
        for (auto& v : y) v = int(rng.uniform_int(3));
        return check({z}, [=] { return num::softmax_cross_entropy(z, y); });
    });
    cases.emplace_back("extractor+classifier", [](std::uint64_t seed) {
        Rng rng(seed);
        models::FeatureExtractor fe(2, 6, 2, 4, rng);
        models::Classifier c(4, 5, 1, 3, rng);
        const Var x = Var::constant(num::gaussian(rng, {8, 2}));
        std::vector<int> y(8);
        for (auto& v : y) v = int(rng.uniform_int(3));
        auto params = fe.parameters();
        for (const auto& p : c.parameters()) params.push_back(p);
        return check(params, [=] { return num::softmax_cross_entropy(c.classify(fe.forward(x)), y); });
    });
    cases.emplace_back("noise_predictor/reverse_loss", [](std::uint64_t seed) {
        Rng rng(seed);
        const auto sched = diffusion::make_linear_schedule(10, 1e-4, 0.02);
        models::NoisePredictor np(3, 8, 2, 6, 10, rng);
        const Tensor f = num::gaussian(rng, {5, 3});
        const Tensor eps = num::gaussian(rng, {5, 3});
        std::vector<int> ks(5);
        for (auto& k : ks) k = int(rng.uniform_int(1, 10));
        return check(np.parameters(), [=] { return diffusion::reverse_loss(f, np, sched, ks, eps); });
    });
    cases.emplace_back("simulate_transitional/snapshot_ce", [](std::uint64_t seed) {
        Rng rng(seed);
        const int K = 4;
        dad::DadModule dad_module(models::NoisePredictor(3, 8, 1, 6, K, rng),
                                  diffusion::make_linear_schedule(K, 1e-3, 0.05));
        const models::Classifier snap = models::Classifier(3, 5, 1, 2, rng).snapshot();
        std::vector<int> y(6);
        for (auto& v : y) v = int(rng.uniform_int(2));
        const models::FeatureBatch src(Var::constant(num::gaussian(rng, {6, 3})), y, models::DomainTag::source());
        const std::uint64_t noise_seed = rng.next_u64();
        return check(dad_module.parameters(), [=] {
            Rng noise(noise_seed);
            const auto sim = dad::simulate_transitional(dad_module, src, K, noise);
            return num::softmax_cross_entropy(snap.classify(sim), y);
        });
    });
    return cases;
}

bool within_sigma(double a, double b, double sigma, double n_sigma = 3.0) { return std::abs(a - b) <= n_sigma * sigma; }

struct Moments {
    double mean = 0;
    double var = 0;
};

Moments moments(const Tensor& t) {
    Moments m;
    const auto d = t.data();
    for (auto v : d) m.mean += double(v);
    m.mean /= double(d.size());
    for (auto v : d) m.var += (double(v) - m.mean) * (double(v) - m.mean);
    m.var /= double(d.size() - 1);
    return m;
}

/// Returns exactly the noise it was built with.
class ExactNoise : public diffusion::NoiseModel {
public:
    explicit ExactNoise(Tensor eps) : eps_(std::move(eps)) {}
    Var predict(const Var&, std::span<const int>) const override { return Var::constant(eps_); }

private:
    Tensor eps_;
};

class ZeroNoise : public diffusion::NoiseModel {
public:
    Var predict(const Var& f, std::span<const int>) const override { return Var::constant(Tensor(f.shape())); }
};

}  // namespace

bool run_grad_suite(int seeds, std::ostream& log) {
    bool ok = true;
    char line[256];
    for (const auto& [name, fn] : grad_cases()) {
        double worst = 0;
        for (int s = 0; s < seeds; ++s) worst = std::max(worst, fn(std::uint64_t(s) + 1).max_rel_error);
        const bool pass = worst < kGradTol;
        ok = ok && pass;
        std::snprintf(line, sizeof line, "%-36s max_rel_err=%.3e %s\n", name.c_str(), worst, pass ? "PASS" : "FAIL");
        log << line;
    }
    return ok;
}

bool run_selftest(long trials, std::ostream& log) {
    bool ok = true;
    char line[256];
    const auto report = [&](const char* name, bool pass, const std::string& detail) {
        ok = ok && pass;
        std::snprintf(line, sizeof line, "%-34s %s %s\n", name, pass ? "PASS" : "FAIL", detail.c_str());
        log << line;
    };

    const int K = 600;
    const auto sched = diffusion::make_linear_schedule(K, 1e-4, 0.02);
    {
        bool exact = sched.beta(1) == num::Real(1e-4) && sched.beta(K) == num::Real(0.02) && sched.alpha_bar(0) == 1;
        num::Real prod = 1;
        for (int k = 1; k <= K; ++k) {
            prod *= num::Real(1) - sched.beta(k);
            exact = exact && sched.alpha(k) == num::Real(1) - sched.beta(k) && sched.alpha_bar(k) == prod;
            if (k > 1) exact = exact && sched.beta(k) > sched.beta(k - 1);
        }
        report("schedule identities", exact, "");
    }

    Rng rng(20240611);
    const std::size_t n = std::size_t(trials);
    const num::Real f0 = 1.5;
    for (int k : {1, 10, K}) {
        Tensor iterated(num::Shape{n, 1}, f0);
        for (int j = 1; j <= k; ++j) iterated = diffusion::diffuse_one_step(iterated, j, sched, num::gaussian(rng, {n, 1}));
        const Tensor closed = diffusion::diffuse_k_steps(Tensor(num::Shape{n, 1}, f0), k, sched, num::gaussian(rng, {n, 1}));
        const Moments a = moments(iterated), b = moments(closed);
        const double se_mean = std::sqrt(a.var / double(n) + b.var / double(n));
        const double se_var = std::sqrt(2.0 / double(n - 1)) * std::sqrt(a.var * a.var + b.var * b.var);
        const bool pass = within_sigma(a.mean, b.mean, se_mean) && within_sigma(a.var, b.var, se_var);
        char detail[160];
        std::snprintf(detail, sizeof detail, "mean %.5f vs %.5f, var %.5f vs %.5f", a.mean, b.mean, a.var, b.var);
        report(("closed form vs iterated, k=" + std::to_string(k)).c_str(), pass, detail);
    }

    {
        const std::size_t rows = 256, d = 4;
        const Tensor f = num::gaussian(rng, {rows, d});
        const Tensor eps = num::gaussian(rng, {rows, d});
        std::vector<int> ks(rows);
        for (auto& k : ks) k = int(rng.uniform_int(1, K));
        const double exact = double(diffusion::reverse_loss(f, ExactNoise(eps), sched, ks, eps).value().item());
        report("exact predictor loss < 1e-12", exact < 1e-12, "loss=" + std::to_string(exact));

        const Tensor big_f = num::gaussian(rng, {n, d});
        const double zero = double(diffusion::reverse_loss(big_f, ZeroNoise(), sched, rng).value().item());
        const double sigma = std::sqrt(2.0 / double(n * d));
        char detail[96];
        std::snprintf(detail, sizeof detail, "loss=%.5f sigma=%.5f", zero, sigma);
        report("zero predictor loss ~ 1", within_sigma(zero, 1.0, sigma), detail);
    }
    return ok;
}

}  // namespace dadapt::tools
