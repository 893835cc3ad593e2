#pragma once

#include <optional>
#include <span>

#include "dadapt/domains.hpp"
#include "dadapt/models.hpp"

namespace dadapt::metrics {

using num::Tensor;

/// Explicit Gaussian-kernel bandwidth, or the median heuristic when unset.
struct MmdConfig {
    std::optional<double> bandwidth;
};

/// Fraction of rows whose argmax logit (ties to the lowest index) equals the label.
double accuracy_from_logits(const Tensor& logits, std::span<const int> labels);
/// Inference path: extractor then classifier.
double accuracy(const models::Classifier& c, const models::FeatureExtractor& fe, const domains::LabeledDataset& d);

/// Median of pairwise Euclidean distances over the pooled rows of x and y.
double median_heuristic_bandwidth(const Tensor& x, const Tensor& y);

/// Biased squared MMD with k(a, b) = exp(-|a - b|^2 / (2 sigma^2)):
/// mean k(x, x') + mean k(y, y') - 2 mean k(x, y). Exactly symmetric in
/// (x, y) and clamped at zero.
double rbf_mmd2(const Tensor& x, const Tensor& y, const MmdConfig& cfg = {});

}  // namespace dadapt::metrics
