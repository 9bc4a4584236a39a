#pragma once

// Dense row-major tensor of 64-bit reals. Rank 0/1/2 cover everything this
// project needs; shapes are validated eagerly and non-finite values are a
// hard error at the few places they could first appear (see tape.hpp).

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskinfill {

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count_of(shape_), fill) {}

    static Tensor scalar(double v) {
        Tensor t(std::vector<std::size_t>{});
        t.data_ = {v};
        return t;
    }

    static Tensor row(std::vector<double> values) {
        Tensor t;
        t.shape_ = {values.size()};
        t.data_ = std::move(values);
        return t;
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        if (values.size() != rows * cols) throw std::invalid_argument("Tensor::matrix: size mismatch");
        Tensor t;
        t.shape_ = {rows, cols};
        t.data_ = std::move(values);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D accessors.
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double item() const {
        if (data_.size() != 1) throw std::logic_error("Tensor::item: not a scalar");
        return data_[0];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static std::size_t count_of(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace maskinfill
