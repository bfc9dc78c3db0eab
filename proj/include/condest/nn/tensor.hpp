#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "condest/error.hpp"

namespace condest::nn {

/// Dense row-major tensor of doubles. The model only uses rank 1 and 2.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_)) {
            throw DimensionError("Tensor: data length does not match shape");
        }
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }
    static Tensor vector(std::size_t len, double fill = 0.0) { return Tensor({len}, fill); }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    /// Rank-2 view: rank-1 tensors are a single row.
    std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
    std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols(), cols()}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    void fill(double x) { std::fill(data_.begin(), data_.end(), x); }
    bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }

    bool all_finite() const noexcept {
        for (double x : data_) {
            if (!std::isfinite(x)) return false;
        }
        return true;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline std::string shape_string(const Tensor& t) {
    std::string s = "[";
    for (std::size_t i = 0; i < t.rank(); ++i) {
        s += (i ? "x" : "") + std::to_string(t.shape()[i]);
    }
    return s + "]";
}

}  // namespace condest::nn
