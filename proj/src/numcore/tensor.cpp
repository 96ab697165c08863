// SPDX-License-Identifier: Apache-2.0

#include "ts2/numcore/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ts2/common/error.hpp"

namespace ts2::numcore {

std::size_t Tensor::checked_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ConfigError("tensor extent must be non-negative");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (checked_numel(t.shape_) != data.size())
        throw ConfigError("tensor data size does not match shape " + t.shape_str());
    t.data_ = std::move(data);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

std::string Tensor::shape_str() const {
    std::ostringstream ss;
    ss << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) ss << "x";
        ss << shape_[i];
    }
    ss << "]";
    return ss.str();
}

void require_shapes(bool cond, const char* op, const Tensor& a, const Tensor& b) {
    if (!cond)
        throw ConfigError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

}  // namespace ts2::numcore
