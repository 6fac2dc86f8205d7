#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ick/error.hpp"

namespace ick {

using Shape = std::vector<std::size_t>;

inline std::size_t num_elements(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape);

/// Dense row-major array. The element count always equals the product of the
/// shape; every dimension is positive.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(num_elements(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (data_.size() != num_elements(shape_)) {
            throw Error(ErrorKind::shape_mismatch,
                        "data length " + std::to_string(data_.size()) + " does not match shape " +
                            shape_to_string(shape_));
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::initializer_list<std::size_t> index) { return data_[flat_index(index)]; }
    const T& at(std::initializer_list<std::size_t> index) const { return data_[flat_index(index)]; }

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const& {
        Tensor out(std::move(shape), data_);
        return out;
    }
    Tensor reshaped(Shape shape) && {
        Tensor out(std::move(shape), std::move(data_));
        return out;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> converted(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(converted));
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void validate_shape() const {
        for (std::size_t d : shape_) {
            if (d == 0) {
                throw Error(ErrorKind::shape_mismatch, "zero-sized dimension in shape " + shape_to_string(shape_));
            }
        }
    }

    std::size_t flat_index(std::initializer_list<std::size_t> index) const {
        if (index.size() != shape_.size()) {
            throw Error(ErrorKind::shape_mismatch, "index rank does not match tensor rank");
        }
        std::size_t flat = 0;
        std::size_t axis = 0;
        for (std::size_t i : index) {
            flat = flat * shape_[axis++] + i;
        }
        return flat;
    }

    Shape shape_;
    std::vector<T> data_;
};

/// Rows of a rank-2 tensor selected by index, in the given order.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& source, std::span<const std::size_t> rows) {
    const std::size_t row_len = source.size() / source.dim(0);
    Shape shape = source.shape();
    shape[0] = rows.size();
    std::vector<T> out;
    out.reserve(rows.size() * row_len);
    for (std::size_t r : rows) {
        auto first = source.storage().begin() + static_cast<std::ptrdiff_t>(r * row_len);
        out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(row_len));
    }
    return Tensor<T>(std::move(shape), std::move(out));
}

}  // namespace ick
