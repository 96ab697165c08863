// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor of doubles. Shapes are small (at most 3-D in
// practice); all layout decisions live here so the op kernels can work on
// raw pointers.

#pragma once

#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

namespace ts2::numcore {

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

    static Tensor scalar(double v) {
        Tensor t({1});
        t.data_[0] = v;
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<double> data);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int extent(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int numel() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }

    // 2-D helpers; valid only when ndim() == 2.
    int rows() const { assert(ndim() == 2); return shape_[0]; }
    int cols() const { assert(ndim() == 2); return shape_[1]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at2(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    double at2(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double v);

    std::string shape_str() const;

private:
    static std::size_t checked_numel(const std::vector<int>& shape);

    std::vector<int> shape_;
    std::vector<double> data_;
};

// Throws ConfigError naming both shapes when `cond` is false.
void require_shapes(bool cond, const char* op, const Tensor& a, const Tensor& b);
void require(bool cond, const std::string& msg);

}  // namespace ts2::numcore
