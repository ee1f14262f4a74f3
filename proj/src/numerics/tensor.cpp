#include "irgsfda/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace irgsfda::numerics {

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    if (std::find(shape_.begin(), shape_.end(), 0) != shape_.end() && shape_size(shape_) != 0)
        throw DimensionError("tensor shape " + shape_string(shape_) + " has a zero dimension");
    values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_size(shape_) != values_.size())
        throw DimensionError("shape " + shape_string(shape_) + " does not hold " +
                             std::to_string(values_.size()) + " values");
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> vals;
    vals.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        vals.insert(vals.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(vals));
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape_));
    return shape_[1];
}

double Tensor::item() const {
    if (values_.size() != 1)
        throw ContractError("item() on non-scalar tensor " + shape_string(shape_));
    return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), values_);
}

Tensor Tensor::transposed() const {
    const std::size_t r = rows(), c = cols();
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = at(i, j);
    return out;
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace irgsfda::numerics
