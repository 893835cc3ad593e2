#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dadapt::num {

#ifdef DADAPT_USE_FLOAT
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

/// Cache-line aligned allocation. Vectorized reductions then split their
/// work the same way for every buffer, which keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <class U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
        return true;
    }
};

using Storage = std::vector<Real, AlignedAllocator<Real>>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array. Rank-2 is the working case everywhere; rank-0/1
/// are allowed for scalars and vectors.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = Real(0));
    Tensor(Shape shape, std::vector<Real> data);

    static Tensor scalar(Real v) { return Tensor(Shape{}, std::vector<Real>{v}); }
    static Tensor matrix(std::size_t rows, std::size_t cols, Real fill = Real(0)) {
        return Tensor(Shape{rows, cols}, fill);
    }
    /// Row-major literal, e.g. Tensor::from_rows({{1, 2}, {3, 4}}).
    static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<Real> data() { return data_; }
    std::span<const Real> data() const { return data_; }
    Storage& storage() { return data_; }
    const Storage& storage() const { return data_; }

    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }
    Real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    Real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    Real item() const;
    bool all_finite() const;
    /// Throws NonFiniteError naming `op` when any entry is NaN/Inf.
    void require_finite(const char* op) const;

    /// Copies the given rows into a new [indices.size() x cols] tensor.
    Tensor gather_rows(std::span<const std::size_t> indices) const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    Storage data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace dadapt::num
