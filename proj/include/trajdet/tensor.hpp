#ifndef TRAJDET_TENSOR_HPP
#define TRAJDET_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "trajdet/errors.hpp"

namespace trajdet {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles.
///
/// The checked constructor enforces that the shape is non-empty with positive
/// extents, that it matches the data length, and that every entry is finite.
/// `zeros` and `filled` build tensors the library then writes into directly.
class Tensor {
public:
    Tensor() : shape_{1}, data_(1, 0.0) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape(shape_);
        if (shape_size(shape_) != data_.size()) {
            throw DimensionError("tensor shape " + shape_string(shape_) + " needs " +
                                 std::to_string(shape_size(shape_)) + " values, got " +
                                 std::to_string(data_.size()));
        }
        for (double v : data_) {
            if (!std::isfinite(v)) throw NumericError("tensor entries must be finite");
        }
    }

    static Tensor zeros(Shape shape) { return filled(std::move(shape), 0.0); }

    static Tensor filled(Shape shape, double value) {
        validate_shape(shape);
        Tensor t;
        t.data_.assign(shape_size(shape), value);
        t.shape_ = std::move(shape);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    /// Rank-1 tensor holding `values`.
    static Tensor vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }

    /// Rank-2 tensor from nested rows, e.g. `Tensor::matrix({{1, 2}, {3, 4}})`.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        std::vector<double> flat;
        std::size_t cols = rows.size() ? rows.begin()->size() : 0;
        for (const auto& row : rows) {
            if (row.size() != cols) throw DimensionError("ragged matrix literal");
            flat.insert(flat.end(), row.begin(), row.end());
        }
        return Tensor({rows.size(), cols}, std::move(flat));
    }

    /// Single row matrix [1 x n] holding `values`.
    static Tensor row(std::span<const double> values) {
        return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const { return dim(0); }
    std::size_t cols() const { return rank() >= 2 ? dim(1) : 1; }
    std::size_t dim(std::size_t axis) const {
        if (axis >= shape_.size()) throw DimensionError("axis out of range for " + shape_string(shape_));
        return shape_[axis];
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    /// Row `r` of a rank-2 tensor as a span.
    std::span<const double> row_span(std::size_t r) const {
        return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
    }
    std::span<double> row_span(std::size_t r) {
        return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    static void validate_shape(const Shape& shape) {
        if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
        for (std::size_t e : shape) {
            if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
        }
    }

    Shape shape_;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("dot of vectors with different lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double l2_norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

inline double linf_norm(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace trajdet

#endif  // TRAJDET_TENSOR_HPP
