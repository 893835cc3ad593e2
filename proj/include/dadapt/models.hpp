#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dadapt/checkpoint.hpp"
#include "dadapt/diffusion.hpp"

namespace dadapt::models {

using num::Real;
using num::Rng;
using num::Tensor;
using num::Var;

/// y = x W + b with W [in x out] and b [1 x out], optionally leaky-rectified.
struct Layer {
    Var weight;
    Var bias;
    bool leaky = true;
};

/// Stack of dense layers. Parameter Vars are shared by copies; use clone()
/// for an independent copy.
class Mlp {
public:
    static constexpr Real kLeakySlope = Real(0.01);

    Mlp() = default;
    /// widths = {in, h1, ..., out}. Hidden layers are leaky-rectified, the
    /// last layer is linear. Init is U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Mlp(std::span<const std::size_t> widths, Rng& rng);
    explicit Mlp(std::vector<Layer> layers);

    Var forward(const Var& x) const;

    std::size_t in_dim() const;
    std::size_t out_dim() const;
    std::size_t depth() const { return layers_.size(); }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Var> parameters() const;
    void set_trainable(bool on);

    Mlp clone() const;

    void export_params(const std::string& prefix, ParamTable& table) const;
    static Mlp import_params(const std::string& prefix, const ParamTable& table);

private:
    std::vector<Layer> layers_;
};

/// FNV-1a over shapes and raw bytes of every tensor, in order.
std::uint64_t checksum(std::span<const Var> params);

struct DomainTag {
    enum class Kind { source, target, transitional };
    Kind kind = Kind::source;
    int k = 0;

    static DomainTag source() { return {Kind::source, 0}; }
    static DomainTag target() { return {Kind::target, 0}; }
    static DomainTag transitional(int k) { return {Kind::transitional, k}; }
    std::string str() const;
    friend bool operator==(const DomainTag&, const DomainTag&) = default;
};

/// Features plus provenance. Labels are present exactly for source and
/// transitional batches.
struct FeatureBatch {
    Var features;
    std::optional<std::vector<int>> labels;
    DomainTag tag;

    FeatureBatch() = default;
    FeatureBatch(Var f, std::optional<std::vector<int>> y, DomainTag t);
    std::size_t size() const { return features.value().rows(); }
    std::size_t dim() const { return features.value().cols(); }
    const std::vector<int>& require_labels() const;
    /// Row subset, cut from the tape.
    FeatureBatch rows(std::span<const std::size_t> indices) const;
};

/// Epoch-shuffled index stream over [0, n): each pass is a fresh
/// permutation; batches may straddle pass boundaries.
class IndexSampler {
public:
    IndexSampler(std::size_t n, std::uint64_t seed);
    std::vector<std::size_t> next(std::size_t batch_size);

private:
    std::size_t n_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

/// Mini-batches drawn from a fixed pool of features.
class BatchSampler {
public:
    BatchSampler(FeatureBatch pool, std::uint64_t seed);
    FeatureBatch next(std::size_t batch_size);
    const FeatureBatch& pool() const { return pool_; }

private:
    FeatureBatch pool_;
    IndexSampler indices_;
};

/// The frozen "Conv Block" analog: an MLP followed by a fixed per-feature
/// affine map (identity until standardization is folded in).
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(std::size_t input_dim, std::size_t hidden, std::size_t hidden_layers, std::size_t feature_dim,
                     Rng& rng);
    explicit FeatureExtractor(Mlp net);

    Var forward(const Var& x) const;
    FeatureBatch extract(const Tensor& x, std::optional<std::vector<int>> labels, DomainTag tag) const;

    std::size_t input_dim() const { return net_.in_dim(); }
    std::size_t feature_dim() const { return net_.out_dim(); }
    bool frozen() const { return frozen_; }
    void freeze();
    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }
    std::vector<Var> parameters() const { return net_.parameters(); }
    std::uint64_t checksum() const;
    FeatureExtractor snapshot() const;

    const std::vector<Real>& out_shift() const { return shift_; }
    const std::vector<Real>& out_scale() const { return scale_; }
    /// Output becomes (raw - shift) / scale.
    void set_output_affine(std::vector<Real> shift, std::vector<Real> scale);

    void export_params(const std::string& prefix, ParamTable& table) const;
    static FeatureExtractor import_params(const std::string& prefix, const ParamTable& table);

private:
    Mlp net_;
    std::vector<Real> shift_;
    std::vector<Real> scale_;
    bool frozen_ = false;
};

class Classifier {
public:
    Classifier() = default;
    Classifier(std::size_t feature_dim, std::size_t hidden, std::size_t hidden_layers, std::size_t classes, Rng& rng);
    explicit Classifier(Mlp net);

    Var classify(const Var& features) const;
    Var classify(const FeatureBatch& batch) const { return classify(batch.features); }

    std::size_t feature_dim() const { return net_.in_dim(); }
    std::size_t classes() const { return net_.out_dim(); }
    bool frozen() const { return frozen_; }
    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }
    std::vector<Var> parameters() const { return net_.parameters(); }
    std::uint64_t checksum() const;
    /// Deep, frozen, independent copy.
    Classifier snapshot() const;

    void export_params(const std::string& prefix, ParamTable& table) const;
    static Classifier import_params(const std::string& prefix, const ParamTable& table);

private:
    Mlp net_;
    bool frozen_ = false;
};

/// Sinusoidal step embedding: [sin(k w_0..w_{h-1}), cos(k w_0..w_{h-1})]
/// with w_i = 10000^(-i/h), h = width/2; odd widths get a trailing zero.
std::vector<Real> timestep_embedding(int k, std::size_t width);

/// f_theta: MLP over [features ++ embedding(k)] predicting the noise.
class NoisePredictor : public diffusion::NoiseModel {
public:
    NoisePredictor() = default;
    NoisePredictor(std::size_t feature_dim, std::size_t hidden, std::size_t hidden_layers, std::size_t embed_dim,
                   int max_k, Rng& rng);

    Var predict(const Var& f_k, std::span<const int> ks) const override;
    Var predict(const Var& f_k, int k) const;

    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t embed_dim() const { return embed_dim_; }
    int max_k() const { return max_k_; }
    bool frozen() const { return frozen_; }
    void set_frozen(bool on);
    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }
    std::vector<Var> parameters() const { return net_.parameters(); }
    std::uint64_t checksum() const;
    NoisePredictor snapshot() const;

    void export_params(const std::string& prefix, ParamTable& table) const;
    static NoisePredictor import_params(const std::string& prefix, const ParamTable& table);

private:
    Mlp net_;
    std::size_t feature_dim_ = 0;
    std::size_t embed_dim_ = 0;
    int max_k_ = 0;
    bool frozen_ = false;
};

/// Moves extractor layers [after_layer, depth) to the front of the
/// classifier, so the extractor output becomes the activation after
/// `after_layer` layers. after_layer == 0 or == depth is a no-op.
void split_backbone(FeatureExtractor& fe, Classifier& c, std::size_t after_layer);

/// Standardizes extractor outputs with the per-feature mean/std of
/// `source_inputs` and compensates the classifier's first layer so the
/// composite function is unchanged.
void fold_feature_standardization(FeatureExtractor& fe, Classifier& c, const Tensor& source_inputs);

}  // namespace dadapt::models
