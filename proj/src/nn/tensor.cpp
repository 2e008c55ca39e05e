#include "rlalloc/nn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "rlalloc/errors.hpp"

namespace rlalloc::nn {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

namespace {
void check_shape(const Shape& shape) {
    if (shape.empty()) throw ArgumentError("tensor shape must have at least one dimension");
    if (std::find(shape.begin(), shape.end(), std::size_t{0}) != shape.end()) {
        throw ArgumentError("tensor shape " + shape_string(shape) + " has a zero dimension");
    }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
        throw ArgumentError("tensor data of length " + std::to_string(data_.size()) + " does not fit shape " +
                            shape_string(shape_));
    }
}

double Tensor::item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

}  // namespace rlalloc::nn
