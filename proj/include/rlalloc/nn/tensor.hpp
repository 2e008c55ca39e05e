#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace rlalloc::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles. Every dimension is >= 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const;
    void fill(double v);
    Tensor reshaped(Shape shape) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Named parameter set. Ordered, so iteration (and hence serialization and
/// optimizer updates) is deterministic.
using TensorMap = std::map<std::string, Tensor>;

}  // namespace rlalloc::nn
