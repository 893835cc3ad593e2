#pragma once

#include <cstdint>
#include <optional>

#include "dadapt/tensor.hpp"

namespace dadapt::num {

/// Counter-based SplitMix64 stream.
///
/// Output i (1-based) is mix64(seed + i * 0x9E3779B97F4A7C15) with the
/// SplitMix64 finalizer, so a stream is fully determined by (seed, counter)
/// and is identical on every platform. Derived quantities:
///   uniform()  = (u64 >> 11) * 2^-53, in [0, 1)
///   normal()   = Box-Muller on (1 - uniform(), uniform()); the sine branch is
///                cached and returned by the next call
///   uniform_int(n) = rejection sampling on the top of the u64 range
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();
    double uniform();
    double normal();
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);
    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    /// Independent child stream keyed by `stream`; does not advance this one.
    Rng split(std::uint64_t stream) const;

    static std::uint64_t mix64(std::uint64_t z);

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    std::optional<double> spare_;
};

/// I.i.d. standard normal entries, filled in row-major order.
Tensor gaussian(Rng& rng, const Shape& shape);

}  // namespace dadapt::num
