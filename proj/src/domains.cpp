#include "dadapt/domains.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "dadapt/rng.hpp"

namespace dadapt::domains {

using num::Real;

void LabeledDataset::validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset '" + domain_name + "' is empty");
    if (points.rank() != 2 || points.rows() != labels.size()) {
        throw num::ShapeError("dataset '" + domain_name + "': points/labels size mismatch");
    }
    for (int l : labels) {
        if (l < 0 || l >= classes) throw std::out_of_range("dataset '" + domain_name + "': label out of range");
    }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.points = points.gather_rows(indices);
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(labels.at(i));
    out.classes = classes;
    out.domain_name = domain_name;
    out.generator_params = generator_params;
    return out;
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, num::Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[std::size_t(rng.uniform_int(std::uint64_t(i)))]);
    return idx;
}

LabeledDataset shuffled(const LabeledDataset& d, num::Rng& rng) {
    const auto idx = permutation(d.size(), rng);
    return d.subset(idx);
}

}  // namespace

LabeledDataset gen_two_moons(std::size_t n, double noise_std, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("gen_two_moons: n must be >= 2");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("gen_two_moons: noise_std must be >= 0");
    num::Rng rng(seed);
    LabeledDataset d;
    d.points = Tensor(num::Shape{n, 2});
    d.labels.resize(n);
    d.classes = 2;
    d.domain_name = "two_moons";
    d.generator_params = {{"n", double(n)}, {"noise_std", noise_std}, {"seed", double(seed)}};
    const std::size_t n0 = (n + 1) / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = std::numbers::pi * rng.uniform();
        double x, y;
        if (i < n0) {
            x = std::cos(t) - 0.5;
            y = std::sin(t) - 0.25;
            d.labels[i] = 0;
        } else {
            x = 0.5 - std::cos(t);
            y = 0.25 - std::sin(t);
            d.labels[i] = 1;
        }
        if (noise_std > 0.0) {
            x += noise_std * rng.normal();
            y += noise_std * rng.normal();
        }
        d.points.at(i, 0) = Real(x);
        d.points.at(i, 1) = Real(y);
    }
    return shuffled(d, rng);
}

namespace {

LabeledDataset affine_2d(const LabeledDataset& d, double m00, double m01, double m10, double m11, double tx,
                         double ty) {
    if (d.input_dim() != 2) throw num::ShapeError("apply_shift: planar datasets only");
    LabeledDataset out = d;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double x = double(d.points.at(i, 0)), y = double(d.points.at(i, 1));
        out.points.at(i, 0) = Real(m00 * x + m01 * y + tx);
        out.points.at(i, 1) = Real(m10 * x + m11 * y + ty);
    }
    return out;
}

std::pair<double, double> translation_xy(std::span<const double> t) {
    if (t.empty()) return {0.0, 0.0};
    if (t.size() != 2) throw num::ShapeError("apply_shift: translation must have 2 components");
    return {t[0], t[1]};
}

}  // namespace

LabeledDataset apply_shift(const LabeledDataset& d, double rotation_deg, std::span<const double> translation,
                           double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("apply_shift: scale must be positive");
    const double th = rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const auto [tx, ty] = translation_xy(translation);
    LabeledDataset out = affine_2d(d, scale * c, -scale * s, scale * s, scale * c, tx, ty);
    out.generator_params["rotation_deg"] = rotation_deg;
    out.generator_params["translate_x"] = tx;
    out.generator_params["translate_y"] = ty;
    out.generator_params["scale"] = scale;
    return out;
}

LabeledDataset invert_shift(const LabeledDataset& d, double rotation_deg, std::span<const double> translation,
                            double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("invert_shift: scale must be positive");
    const double th = rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const auto [tx, ty] = translation_xy(translation);
    // x = R^T (y - t) / scale
    const double k = 1.0 / scale;
    return affine_2d(d, k * c, k * s, -k * s, k * c, -k * (c * tx + s * ty), -k * (-s * tx + c * ty));
}

std::pair<double, double> gaussian_mixture_mean(int c, int C, double mean_shift, bool target) {
    const double a = 2.0 * std::numbers::pi * double(c) / double(C);
    double mx = 3.0 * std::cos(a), my = 3.0 * std::sin(a);
    if (target) {
        mx += -mean_shift * std::sin(a);
        my += mean_shift * std::cos(a);
    }
    return {mx, my};
}

std::pair<LabeledDataset, LabeledDataset> gen_gaussian_mixture_pair(int C, std::size_t n, double mean_shift,
                                                                    std::uint64_t seed) {
    if (C < 2) throw std::invalid_argument("gen_gaussian_mixture_pair: C must be >= 2");
    if (n < std::size_t(C)) throw std::invalid_argument("gen_gaussian_mixture_pair: n must be >= C");
    const num::Rng root(seed);
    auto make = [&](bool target) {
        num::Rng rng = root.split(target ? 2 : 1);
        LabeledDataset d;
        d.points = Tensor(num::Shape{n, 2});
        d.labels.resize(n);
        d.classes = C;
        d.domain_name = target ? "gaussian_mixture_target" : "gaussian_mixture_source";
        d.generator_params = {{"C", double(C)}, {"n", double(n)}, {"mean_shift", mean_shift}, {"seed", double(seed)}};
        for (std::size_t i = 0; i < n; ++i) {
            const int c = int(i % std::size_t(C));
            const auto [mx, my] = gaussian_mixture_mean(c, C, mean_shift, target);
            d.labels[i] = c;
            d.points.at(i, 0) = Real(mx + rng.normal());
            d.points.at(i, 1) = Real(my + rng.normal());
        }
        return shuffled(d, rng);
    };
    return {make(false), make(true)};
}

Standardizer Standardizer::fit(const Tensor& points) {
    const std::size_t n = points.rows(), d = points.cols();
    if (n < 2) throw std::invalid_argument("Standardizer: need at least 2 points");
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += double(points.at(i, j));
    for (auto& m : s.mean) m /= double(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double e = double(points.at(i, j)) - s.mean[j];
            s.stddev[j] += e * e;
        }
    for (auto& v : s.stddev) v = std::max(std::sqrt(v / double(n)), 1e-12);
    return s;
}

LabeledDataset Standardizer::apply(const LabeledDataset& d) const {
    if (d.input_dim() != mean.size()) throw num::ShapeError("Standardizer: width mismatch");
    LabeledDataset out = d;
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < mean.size(); ++j)
            out.points.at(i, j) = Real((double(d.points.at(i, j)) - mean[j]) / stddev[j]);
    return out;
}

std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& d, double test_fraction,
                                                           std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("train_test_split: fraction must be in (0, 1)");
    }
    num::Rng rng(seed);
    const auto idx = permutation(d.size(), rng);
    const auto n_test = std::size_t(std::llround(double(d.size()) * test_fraction));
    if (n_test == 0 || n_test >= d.size()) throw std::invalid_argument("train_test_split: degenerate split");
    std::vector<std::size_t> test(idx.begin(), idx.begin() + std::ptrdiff_t(n_test));
    std::vector<std::size_t> train(idx.begin() + std::ptrdiff_t(n_test), idx.end());
    return {d.subset(train), d.subset(test)};
}

void write_csv(std::ostream& out, const LabeledDataset& d) {
    const std::size_t dim = d.input_dim();
    for (std::size_t j = 0; j < dim; ++j) out << 'x' << j << ',';
    out << "label,domain\n";
    char buf[32];
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            auto res = std::to_chars(buf, buf + sizeof buf, double(d.points.at(i, j)));
            out.write(buf, res.ptr - buf);
            out << ',';
        }
        out << d.labels[i] << ',' << d.domain_name << '\n';
    }
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

LabeledDataset read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("read_csv: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_commas(line);
    if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "domain") {
        throw std::invalid_argument("read_csv: header must be x0,...,label,domain");
    }
    const std::size_t dim = header.size() - 2;
    for (std::size_t j = 0; j < dim; ++j) {
        if (header[j] != "x" + std::to_string(j)) throw std::invalid_argument("read_csv: bad column " + header[j]);
    }
    std::vector<Real> values;
    LabeledDataset d;
    int max_label = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != dim + 2) throw std::invalid_argument("read_csv: wrong cell count on line " + std::to_string(lineno));
        for (std::size_t j = 0; j < dim; ++j) {
            double v = 0;
            const auto& c = cells[j];
            auto res = std::from_chars(c.data(), c.data() + c.size(), v);
            if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
                throw std::invalid_argument("read_csv: bad number on line " + std::to_string(lineno));
            }
            values.push_back(Real(v));
        }
        int label = 0;
        const auto& lc = cells[dim];
        auto res = std::from_chars(lc.data(), lc.data() + lc.size(), label);
        if (res.ec != std::errc() || res.ptr != lc.data() + lc.size() || label < 0) {
            throw std::invalid_argument("read_csv: bad label on line " + std::to_string(lineno));
        }
        d.labels.push_back(label);
        max_label = std::max(max_label, label);
        d.domain_name = cells[dim + 1];
    }
    d.points = Tensor(num::Shape{d.labels.size(), dim}, std::move(values));
    d.classes = std::max(2, max_label + 1);
    d.validate();
    return d;
}

void save_csv(const std::filesystem::path& path, const LabeledDataset& d) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_csv(out, d);
}

LabeledDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_csv(in);
}

}  // namespace dadapt::domains
