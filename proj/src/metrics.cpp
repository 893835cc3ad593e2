#include "dadapt/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dadapt/ops.hpp"

namespace dadapt::metrics {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat to_mat(const Tensor& t) {
    Mat m(Eigen::Index(t.rows()), Eigen::Index(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m(Eigen::Index(i), Eigen::Index(j)) = double(t.at(i, j));
    return m;
}

Mat sq_dists(const Mat& a, const Mat& b) {
    const Eigen::VectorXd an = a.rowwise().squaredNorm();
    const Eigen::VectorXd bn = b.rowwise().squaredNorm();
    Mat d = -2.0 * (a * b.transpose());
    d.colwise() += an;
    d.rowwise() += bn.transpose();
    return d.cwiseMax(0.0);
}

double kernel_mean(const Mat& a, const Mat& b, double two_sigma2) {
    return (-sq_dists(a, b).array() / two_sigma2).exp().mean();
}

bool lex_less(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return a.shape() < b.shape();
    return std::lexicographical_compare(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

void require_samples(const Tensor& x, const Tensor& y) {
    if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols()) throw num::ShapeError("rbf_mmd2: width mismatch");
    if (x.rows() < 2 || y.rows() < 2) throw std::invalid_argument("rbf_mmd2: need at least 2 samples on each side");
}

}  // namespace

double accuracy_from_logits(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.rows() == 0) throw std::invalid_argument("accuracy: empty dataset");
    if (labels.size() != logits.rows()) throw num::ShapeError("accuracy: label count mismatch");
    const auto pred = num::argmax_rows(logits);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
    return double(hit) / double(pred.size());
}

double accuracy(const models::Classifier& c, const models::FeatureExtractor& fe, const domains::LabeledDataset& d) {
    if (d.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
    const auto logits = c.classify(fe.forward(num::Var::constant(d.points))).value();
    return accuracy_from_logits(logits, d.labels);
}

double median_heuristic_bandwidth(const Tensor& x, const Tensor& y) {
    const Mat a = to_mat(x), b = to_mat(y);
    Mat pooled(a.rows() + b.rows(), a.cols());
    pooled << a, b;
    const Mat d = sq_dists(pooled, pooled);
    std::vector<double> upper;
    upper.reserve(std::size_t(d.rows() * (d.rows() - 1) / 2));
    for (Eigen::Index i = 0; i < d.rows(); ++i)
        for (Eigen::Index j = i + 1; j < d.cols(); ++j) upper.push_back(std::sqrt(d(i, j)));
    if (upper.empty()) throw std::invalid_argument("median_heuristic_bandwidth: need at least 2 points");
    auto mid = upper.begin() + std::ptrdiff_t(upper.size() / 2);
    std::nth_element(upper.begin(), mid, upper.end());
    double med = *mid;
    if (upper.size() % 2 == 0) {
        const double lo = *std::max_element(upper.begin(), mid);
        med = 0.5 * (med + lo);
    }
    return med > 0.0 ? med : 1.0;
}

double rbf_mmd2(const Tensor& x_in, const Tensor& y_in, const MmdConfig& cfg) {
    require_samples(x_in, y_in);
    const bool swap = lex_less(y_in, x_in);
    const Tensor& x = swap ? y_in : x_in;
    const Tensor& y = swap ? x_in : y_in;
    double sigma;
    if (cfg.bandwidth) {
        sigma = *cfg.bandwidth;
        if (!(sigma > 0.0)) throw std::invalid_argument("rbf_mmd2: bandwidth must be positive");
    } else {
        sigma = median_heuristic_bandwidth(x, y);
    }
    const double two_sigma2 = 2.0 * sigma * sigma;
    const Mat a = to_mat(x), b = to_mat(y);
    const double v = kernel_mean(a, a, two_sigma2) + kernel_mean(b, b, two_sigma2) - 2.0 * kernel_mean(a, b, two_sigma2);
    if (!std::isfinite(v)) throw num::NonFiniteError("rbf_mmd2: non-finite value");
    return std::max(v, 0.0);
}

}  // namespace dadapt::metrics
