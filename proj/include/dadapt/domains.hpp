#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dadapt/tensor.hpp"

namespace dadapt::domains {

using num::Tensor;

struct LabeledDataset {
    Tensor points;  // [n x input_dim]
    std::vector<int> labels;
    int classes = 2;
    std::string domain_name;
    std::map<std::string, double> generator_params;

    std::size_t size() const { return labels.size(); }
    std::size_t input_dim() const { return points.cols(); }
    /// Throws when the invariants (n >= 1, labels in range, shape) fail.
    void validate() const;
    LabeledDataset subset(std::span<const std::size_t> indices) const;
};

/// Class 0 on the upper unit half-circle centred at (-0.5, -0.25); class 1,
/// its point reflection, on the lower half-circle centred at (0.5, 0.25). The
/// layout is symmetric about the origin, so apply_shift rotates the data
/// about its own centre. Angles are uniform on [0, pi], jitter is
/// N(0, noise_std^2) per coordinate, rows are shuffled.
LabeledDataset gen_two_moons(std::size_t n, double noise_std, std::uint64_t seed);

/// x -> scale R(rotation_deg) x + translation, in the plane. Labels unchanged.
LabeledDataset apply_shift(const LabeledDataset& d, double rotation_deg, std::span<const double> translation,
                           double scale);
/// Undoes apply_shift with the same parameters.
LabeledDataset invert_shift(const LabeledDataset& d, double rotation_deg, std::span<const double> translation,
                            double scale);

/// C unit-variance clusters in 2-D with means 3 (cos 2 pi c / C, sin 2 pi c / C).
/// Target clusters are translated by mean_shift along the tangential
/// direction (-sin, cos) of their class angle. Each domain has n points.
std::pair<LabeledDataset, LabeledDataset> gen_gaussian_mixture_pair(int C, std::size_t n, double mean_shift,
                                                                    std::uint64_t seed);
/// Configured class mean for gen_gaussian_mixture_pair.
std::pair<double, double> gaussian_mixture_mean(int c, int C, double mean_shift, bool target);

/// Per-column affine standardization fitted on one dataset.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Standardizer fit(const Tensor& points);
    LabeledDataset apply(const LabeledDataset& d) const;
};

/// Seeded shuffle, then the first round(n * test_fraction) rows become the test split.
std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& d, double test_fraction,
                                                           std::uint64_t seed);

/// Header `x0,...,x{d-1},label,domain`, one row per point.
void write_csv(std::ostream& out, const LabeledDataset& d);
LabeledDataset read_csv(std::istream& in);
void save_csv(const std::filesystem::path& path, const LabeledDataset& d);
LabeledDataset load_csv(const std::filesystem::path& path);

}  // namespace dadapt::domains
