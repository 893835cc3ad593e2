#include "dadapt/models.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "dadapt/ops.hpp"

namespace dadapt::models {

namespace {

Tensor uniform_tensor(num::Shape shape, Real bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = Real((2.0 * rng.uniform() - 1.0) * double(bound));
    return t;
}

Var clone_param(const Var& v, bool trainable) {
    return trainable ? Var::parameter(v.value()) : Var::constant(v.value());
}

Tensor vec_tensor(const std::vector<Real>& v) { return Tensor(num::Shape{v.size()}, v); }

std::vector<Real> tensor_vec(const Tensor& t) { return std::vector<Real>(t.data().begin(), t.data().end()); }

Real scalar_entry(const ParamTable& table, const std::string& name) { return table.get(name).item(); }

}  // namespace

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::span<const std::size_t> widths, Rng& rng) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const std::size_t in = widths[i], out = widths[i + 1];
        if (in == 0 || out == 0) throw std::invalid_argument("Mlp: zero width");
        const Real bound = Real(1) / std::sqrt(Real(in));
        Layer layer;
        layer.weight = Var::parameter(uniform_tensor({in, out}, bound, rng));
        layer.bias = Var::parameter(uniform_tensor({1, out}, bound, rng));
        layer.leaky = i + 2 < widths.size();
        layers_.push_back(std::move(layer));
    }
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
        if (layers_[i].weight.value().cols() != layers_[i + 1].weight.value().rows()) {
            throw num::ShapeError("Mlp: consecutive layer widths disagree");
        }
    }
}

Var Mlp::forward(const Var& x) const {
    if (layers_.empty()) return x;
    if (x.value().rank() != 2 || x.value().cols() != in_dim()) {
        throw num::ShapeError("Mlp: input " + num::shape_str(x.shape()) + " does not match width " +
                              std::to_string(in_dim()));
    }
    Var h = x;
    for (const auto& layer : layers_) {
        h = num::add_row(num::matmul(h, layer.weight), layer.bias);
        if (layer.leaky) h = num::leaky_relu(h, kLeakySlope);
    }
    return h;
}

std::size_t Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().weight.value().rows(); }
std::size_t Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().weight.value().cols(); }

std::vector<Var> Mlp::parameters() const {
    std::vector<Var> out;
    out.reserve(2 * layers_.size());
    for (const auto& l : layers_) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

void Mlp::set_trainable(bool on) {
    for (auto& l : layers_) {
        l.weight.set_requires_grad(on);
        l.bias.set_requires_grad(on);
        l.weight.zero_grad();
        l.bias.zero_grad();
    }
}

Mlp Mlp::clone() const {
    std::vector<Layer> copy;
    copy.reserve(layers_.size());
    for (const auto& l : layers_) {
        copy.push_back({clone_param(l.weight, l.weight.requires_grad()), clone_param(l.bias, l.bias.requires_grad()),
                        l.leaky});
    }
    return Mlp(std::move(copy));
}

void Mlp::export_params(const std::string& prefix, ParamTable& table) const {
    table.put(prefix + ".depth", Tensor::scalar(Real(layers_.size())));
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string p = prefix + ".layer" + std::to_string(i);
        table.put(p + ".weight", layers_[i].weight.value());
        table.put(p + ".bias", layers_[i].bias.value());
        table.put(p + ".leaky", Tensor::scalar(layers_[i].leaky ? Real(1) : Real(0)));
    }
}

Mlp Mlp::import_params(const std::string& prefix, const ParamTable& table) {
    const auto depth = std::size_t(scalar_entry(table, prefix + ".depth"));
    std::vector<Layer> layers;
    for (std::size_t i = 0; i < depth; ++i) {
        const std::string p = prefix + ".layer" + std::to_string(i);
        layers.push_back({Var::parameter(table.get(p + ".weight")), Var::parameter(table.get(p + ".bias")),
                          scalar_entry(table, p + ".leaky") != Real(0)});
    }
    return Mlp(std::move(layers));
}

std::uint64_t checksum(std::span<const Var> params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& v : params) {
        for (auto e : v.value().shape()) {
            const std::uint64_t e64 = e;
            feed(&e64, sizeof e64);
        }
        feed(v.value().data().data(), v.value().numel() * sizeof(Real));
    }
    return h;
}

// ---------------------------------------------------------------------------
// FeatureBatch

std::string DomainTag::str() const {
    switch (kind) {
        case Kind::source: return "source";
        case Kind::target: return "target";
        case Kind::transitional: return "transitional(" + std::to_string(k) + ")";
    }
    return "?";
}

FeatureBatch::FeatureBatch(Var f, std::optional<std::vector<int>> y, DomainTag t)
    : features(std::move(f)), labels(std::move(y)), tag(t) {
    const bool want_labels = tag.kind != DomainTag::Kind::target;
    if (want_labels != labels.has_value()) {
        throw std::invalid_argument("FeatureBatch: " + tag.str() +
                                    (want_labels ? " batch requires labels" : " batch must not carry labels"));
    }
    if (labels && labels->size() != features.value().rows()) {
        throw num::ShapeError("FeatureBatch: label count does not match rows");
    }
}

const std::vector<int>& FeatureBatch::require_labels() const {
    if (!labels) throw std::logic_error("FeatureBatch: " + tag.str() + " batch has no labels");
    return *labels;
}

FeatureBatch FeatureBatch::rows(std::span<const std::size_t> indices) const {
    std::optional<std::vector<int>> y;
    if (labels) {
        y.emplace();
        y->reserve(indices.size());
        for (auto i : indices) y->push_back(labels->at(i));
    }
    return FeatureBatch(Var::constant(features.value().gather_rows(indices)), std::move(y), tag);
}

IndexSampler::IndexSampler(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed) {
    if (n == 0) throw std::invalid_argument("IndexSampler: empty pool");
}

std::vector<std::size_t> IndexSampler::next(std::size_t batch_size) {
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    while (out.size() < batch_size) {
        if (pos_ == order_.size()) {
            order_.resize(n_);
            for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
            for (std::size_t i = n_; i > 1; --i) {
                std::swap(order_[i - 1], order_[std::size_t(rng_.uniform_int(std::uint64_t(i)))]);
            }
            pos_ = 0;
        }
        out.push_back(order_[pos_++]);
    }
    return out;
}

BatchSampler::BatchSampler(FeatureBatch pool, std::uint64_t seed)
    : pool_(std::move(pool)), indices_(pool_.size(), seed) {}

FeatureBatch BatchSampler::next(std::size_t batch_size) {
    const auto idx = indices_.next(batch_size);
    return pool_.rows(idx);
}

// ---------------------------------------------------------------------------
// FeatureExtractor

namespace {
std::vector<std::size_t> stack_widths(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out) {
    std::vector<std::size_t> w{in};
    for (std::size_t i = 0; i < layers; ++i) w.push_back(hidden);
    w.push_back(out);
    return w;
}
}  // namespace

FeatureExtractor::FeatureExtractor(std::size_t input_dim, std::size_t hidden, std::size_t hidden_layers,
                                   std::size_t feature_dim, Rng& rng)
    : FeatureExtractor(Mlp(stack_widths(input_dim, hidden, hidden_layers, feature_dim), rng)) {}

FeatureExtractor::FeatureExtractor(Mlp net)
    : net_(std::move(net)), shift_(net_.out_dim(), Real(0)), scale_(net_.out_dim(), Real(1)) {}

Var FeatureExtractor::forward(const Var& x) const {
    Var raw = net_.forward(x);
    bool identity = true;
    for (std::size_t j = 0; j < shift_.size(); ++j) identity = identity && shift_[j] == Real(0) && scale_[j] == Real(1);
    if (identity) return raw;
    Tensor inv(num::Shape{1, shift_.size()});
    Tensor off(num::Shape{1, shift_.size()});
    for (std::size_t j = 0; j < shift_.size(); ++j) {
        inv[j] = Real(1) / scale_[j];
        off[j] = -shift_[j] / scale_[j];
    }
    const std::size_t n = raw.value().rows();
    Tensor inv_full(num::Shape{n, shift_.size()});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < shift_.size(); ++j) inv_full.at(i, j) = inv[j];
    return num::add_row(num::mul(raw, Var::constant(std::move(inv_full))), Var::constant(std::move(off)));
}

FeatureBatch FeatureExtractor::extract(const Tensor& x, std::optional<std::vector<int>> labels, DomainTag tag) const {
    if (x.rank() != 2 || x.cols() != input_dim()) {
        throw num::ShapeError("feature_extract: input " + num::shape_str(x.shape()) + " vs width " +
                              std::to_string(input_dim()));
    }
    Var f = forward(Var::constant(x));
    return FeatureBatch(f.detach(), std::move(labels), tag);
}

void FeatureExtractor::freeze() {
    net_.set_trainable(false);
    frozen_ = true;
}

std::uint64_t FeatureExtractor::checksum() const {
    auto params = parameters();
    params.push_back(Var::constant(vec_tensor(shift_)));
    params.push_back(Var::constant(vec_tensor(scale_)));
    return models::checksum(params);
}

FeatureExtractor FeatureExtractor::snapshot() const {
    FeatureExtractor copy(net_.clone());
    copy.shift_ = shift_;
    copy.scale_ = scale_;
    copy.freeze();
    return copy;
}

void FeatureExtractor::set_output_affine(std::vector<Real> shift, std::vector<Real> scale) {
    if (shift.size() != feature_dim() || scale.size() != feature_dim()) {
        throw num::ShapeError("set_output_affine: width mismatch");
    }
    for (Real s : scale) {
        if (!(s > Real(0)) || !std::isfinite(s)) throw std::invalid_argument("set_output_affine: scale must be positive");
    }
    shift_ = std::move(shift);
    scale_ = std::move(scale);
}

void FeatureExtractor::export_params(const std::string& prefix, ParamTable& table) const {
    net_.export_params(prefix, table);
    table.put(prefix + ".out_shift", vec_tensor(shift_));
    table.put(prefix + ".out_scale", vec_tensor(scale_));
}

FeatureExtractor FeatureExtractor::import_params(const std::string& prefix, const ParamTable& table) {
    FeatureExtractor fe(Mlp::import_params(prefix, table));
    fe.set_output_affine(tensor_vec(table.get(prefix + ".out_shift")), tensor_vec(table.get(prefix + ".out_scale")));
    fe.freeze();
    return fe;
}

// ---------------------------------------------------------------------------
// Classifier

Classifier::Classifier(std::size_t feature_dim, std::size_t hidden, std::size_t hidden_layers, std::size_t classes,
                       Rng& rng)
    : net_(stack_widths(feature_dim, hidden, hidden_layers, classes), rng) {
    if (classes < 2) throw std::invalid_argument("Classifier: need at least 2 classes");
}

Classifier::Classifier(Mlp net) : net_(std::move(net)) {}

Var Classifier::classify(const Var& features) const {
    if (features.value().rank() != 2 || features.value().cols() != feature_dim()) {
        throw num::ShapeError("classify: features " + num::shape_str(features.shape()) + " vs width " +
                              std::to_string(feature_dim()));
    }
    return net_.forward(features);
}

std::uint64_t Classifier::checksum() const { return models::checksum(parameters()); }

Classifier Classifier::snapshot() const {
    Classifier copy(net_.clone());
    copy.net_.set_trainable(false);
    copy.frozen_ = true;
    return copy;
}

void Classifier::export_params(const std::string& prefix, ParamTable& table) const { net_.export_params(prefix, table); }

Classifier Classifier::import_params(const std::string& prefix, const ParamTable& table) {
    return Classifier(Mlp::import_params(prefix, table));
}

// ---------------------------------------------------------------------------
// NoisePredictor

std::vector<Real> timestep_embedding(int k, std::size_t width) {
    std::vector<Real> e(width, Real(0));
    const std::size_t half = width / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -double(i) / double(half));
        e[i] = Real(std::sin(double(k) * freq));
        e[half + i] = Real(std::cos(double(k) * freq));
    }
    return e;
}

NoisePredictor::NoisePredictor(std::size_t feature_dim, std::size_t hidden, std::size_t hidden_layers,
                               std::size_t embed_dim, int max_k, Rng& rng)
    : net_(stack_widths(feature_dim + embed_dim, hidden, hidden_layers, feature_dim), rng),
      feature_dim_(feature_dim),
      embed_dim_(embed_dim),
      max_k_(max_k) {
    if (max_k < 1) throw std::invalid_argument("NoisePredictor: max_k must be >= 1");
}

Var NoisePredictor::predict(const Var& f_k, std::span<const int> ks) const {
    const Tensor& f = f_k.value();
    if (f.rank() != 2 || f.cols() != feature_dim_) {
        throw num::ShapeError("noise_predict: input " + num::shape_str(f.shape()) + " vs width " +
                              std::to_string(feature_dim_));
    }
    if (ks.size() != f.rows()) throw num::ShapeError("noise_predict: one step index per row required");
    Tensor emb(num::Shape{f.rows(), embed_dim_});
    int cached_k = -1;
    std::vector<Real> e;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] < 1 || ks[i] > max_k_) {
            throw std::out_of_range("noise_predict: step " + std::to_string(ks[i]) + " outside [1, " +
                                    std::to_string(max_k_) + "]");
        }
        if (ks[i] != cached_k) {
            e = timestep_embedding(ks[i], embed_dim_);
            cached_k = ks[i];
        }
        std::copy(e.begin(), e.end(), emb.data().begin() + std::ptrdiff_t(i * embed_dim_));
    }
    return net_.forward(num::concat_cols(f_k, Var::constant(std::move(emb))));
}

Var NoisePredictor::predict(const Var& f_k, int k) const {
    const std::vector<int> ks(f_k.value().rows(), k);
    return predict(f_k, ks);
}

void NoisePredictor::set_frozen(bool on) {
    net_.set_trainable(!on);
    frozen_ = on;
}

std::uint64_t NoisePredictor::checksum() const { return models::checksum(parameters()); }

NoisePredictor NoisePredictor::snapshot() const {
    NoisePredictor copy = *this;
    copy.net_ = net_.clone();
    copy.set_frozen(true);
    return copy;
}

void NoisePredictor::export_params(const std::string& prefix, ParamTable& table) const {
    net_.export_params(prefix, table);
    table.put(prefix + ".feature_dim", Tensor::scalar(Real(feature_dim_)));
    table.put(prefix + ".embed_dim", Tensor::scalar(Real(embed_dim_)));
    table.put(prefix + ".max_k", Tensor::scalar(Real(max_k_)));
}

NoisePredictor NoisePredictor::import_params(const std::string& prefix, const ParamTable& table) {
    NoisePredictor np;
    np.net_ = Mlp::import_params(prefix, table);
    np.feature_dim_ = std::size_t(scalar_entry(table, prefix + ".feature_dim"));
    np.embed_dim_ = std::size_t(scalar_entry(table, prefix + ".embed_dim"));
    np.max_k_ = int(scalar_entry(table, prefix + ".max_k"));
    if (np.net_.in_dim() != np.feature_dim_ + np.embed_dim_ || np.net_.out_dim() != np.feature_dim_) {
        throw CheckpointError("noise predictor widths inconsistent in checkpoint");
    }
    return np;
}

// ---------------------------------------------------------------------------
// Backbone surgery

void split_backbone(FeatureExtractor& fe, Classifier& c, std::size_t after_layer) {
    const std::size_t depth = fe.net().depth();
    if (after_layer == 0 || after_layer == depth) return;
    if (after_layer > depth) throw std::invalid_argument("split_backbone: split point beyond extractor depth");
    if (fe.frozen() || c.frozen()) throw std::logic_error("split_backbone: models must not be frozen yet");
    auto& src = fe.net().layers();
    std::vector<Layer> head(src.begin(), src.begin() + std::ptrdiff_t(after_layer));
    std::vector<Layer> tail(src.begin() + std::ptrdiff_t(after_layer), src.end());
    for (const auto& l : c.net().layers()) tail.push_back(l);
    fe = FeatureExtractor(Mlp(std::move(head)));
    c = Classifier(Mlp(std::move(tail)));
}

void fold_feature_standardization(FeatureExtractor& fe, Classifier& c, const Tensor& source_inputs) {
    const Tensor raw = fe.net().forward(Var::constant(source_inputs)).value();
    const std::size_t n = raw.rows(), d = raw.cols();
    if (n < 2) throw std::invalid_argument("fold_feature_standardization: need at least 2 samples");
    std::vector<Real> mu(d, Real(0)), sd(d, Real(0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mu[j] += raw.at(i, j);
    for (auto& m : mu) m /= Real(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) sd[j] += (raw.at(i, j) - mu[j]) * (raw.at(i, j) - mu[j]);
    for (auto& s : sd) s = std::max(std::sqrt(s / Real(n)), Real(1e-6));

    // logits = raw W + b = (std * f + mu) W + b
    Layer& first = c.net().layers().front();
    Tensor& w = first.weight.mutable_value();
    Tensor& b = first.bias.mutable_value();
    const std::size_t out = w.cols();
    for (std::size_t o = 0; o < out; ++o) {
        Real shift = 0;
        for (std::size_t j = 0; j < d; ++j) shift += mu[j] * w.at(j, o);
        b[o] += shift;
    }
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t o = 0; o < out; ++o) w.at(j, o) *= sd[j];
    fe.set_output_affine(std::move(mu), std::move(sd));
}

}  // namespace dadapt::models
