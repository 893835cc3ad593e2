#include "dadapt/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dadapt::num {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t Rng::mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * kGamma);
}

double Rng::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (spare_) {
        const double v = *spare_;
        spare_.reset();
        return v;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: empty range");
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw std::invalid_argument("Rng::uniform_int: hi < lo");
    return lo + std::int64_t(uniform_int(std::uint64_t(hi - lo) + 1));
}

Rng Rng::split(std::uint64_t stream) const { return Rng(mix64(seed_ ^ mix64(stream + kGamma))); }

Tensor gaussian(Rng& rng, const Shape& shape) {
    Tensor t(shape);
    for (auto& v : t.storage()) v = Real(rng.normal());
    return t;
}

}  // namespace dadapt::num
