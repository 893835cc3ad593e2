#include "dadapt/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dadapt::num {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != shape_numel(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<Real> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 2) return shape_[0];
    if (shape_.size() == 1) return 1;
    return 1;
}

std::size_t Tensor::cols() const {
    if (shape_.size() == 2) return shape_[1];
    if (shape_.size() == 1) return shape_[0];
    return 1;
}

Real Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (Real v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::require_finite(const char* op) const {
    if (!all_finite()) throw NonFiniteError(std::string(op) + ": non-finite value produced");
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
    const std::size_t c = cols();
    Tensor out(Shape{indices.size(), c});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows()) throw ShapeError("gather_rows: row index out of range");
        const Real* src = data_.data() + indices[i] * c;
        std::copy(src, src + c, out.data_.data() + i * c);
    }
    return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

}  // namespace dadapt::num
