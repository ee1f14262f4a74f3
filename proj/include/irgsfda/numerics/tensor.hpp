#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace irgsfda::numerics {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a documented precondition does not hold.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Tensors are plain values. Gradient information is produced by a Tape
/// (see tape.hpp) and written back into `grad` for tensors bound as
/// trainable parameters.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor identity(std::size_t n);
    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return values_.size(); }
    bool is_matrix() const noexcept { return shape_.size() == 2; }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::vector<double>& storage() noexcept { return values_; }
    const std::vector<double>& storage() const noexcept { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
    double item() const;

    /// Same values, new shape of equal element count.
    Tensor reshaped(Shape shape) const;
    Tensor transposed() const;

    bool all_finite() const noexcept;

    bool requires_grad = false;
    std::optional<std::vector<double>> grad;

    void zero_grad() { grad.reset(); }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Shape shape_;
    std::vector<double> values_;
};

}  // namespace irgsfda::numerics
