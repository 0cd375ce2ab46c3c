#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dkamc/errors.hpp"

namespace dkamc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// "2x128" style rendering, used in error messages and layer tables.
std::string shape_string(const Shape& shape);

// Dense row-major array. Value semantics; copies are deep.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
        check_extents();
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (data_.size() != shape_numel(shape_)) {
            throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    T& at(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
    const T& at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    void reshape(Shape shape) {
        if (shape_numel(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        shape_ = std::move(shape);
    }

    bool operator==(const Tensor&) const = default;

private:
    void check_extents() const {
        for (std::size_t e : shape_) {
            if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
    std::vector<To> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
    return Tensor<To>(t.shape(), std::move(out));
}

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& expected, const char* what) {
    if (t.shape() != expected) {
        throw ShapeError(std::string(what) + ": expected " + shape_string(expected) + ", got " +
                         shape_string(t.shape()));
    }
}

template <typename T>
double squared_norm(const Tensor<T>& t) {
    double s = 0.0;
    for (T v : t.data()) s += static_cast<double>(v) * static_cast<double>(v);
    return s;
}

enum class ParamRole { Weight, Bias, Scale, Shift };

// Trainable tensor with its gradient and momentum buffers. fan_in/fan_out are
// only meaningful for weights and drive the uniform initializer.
template <typename T>
struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Shape shape, ParamRole role, std::size_t fan_in = 0, std::size_t fan_out = 0)
        : name(std::move(name)),
          value(shape),
          grad(shape),
          momentum(shape),
          role(role),
          fan_in(fan_in),
          fan_out(fan_out) {}

    void zero_grad() { grad.fill(T{0}); }

    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> momentum;
    ParamRole role = ParamRole::Weight;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
};

// Named view onto a tensor that belongs in a checkpoint (parameter values and
// batch-norm running statistics).
template <typename T>
struct StateEntry {
    std::string name;
    Tensor<T>* tensor;
};

}  // namespace dkamc
