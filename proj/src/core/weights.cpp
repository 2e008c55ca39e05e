#include "rlalloc/weights.hpp"

#include <cmath>
#include <string>

#include "rlalloc/errors.hpp"

namespace rlalloc {

std::string WeightVector::check(std::span<const double> w) {
    if (w.empty()) return "weight vector is empty";
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!std::isfinite(w[i])) return "component " + std::to_string(i) + " is not finite";
        if (w[i] < 0.0) return "component " + std::to_string(i) + " is negative (" + std::to_string(w[i]) + ")";
        sum += w[i];
    }
    if (std::abs(sum - 1.0) > kSumTolerance) return "components sum to " + std::to_string(sum) + ", not 1";
    return {};
}

WeightVector::WeightVector(std::vector<double> w) : w_(std::move(w)) {
    if (auto reason = check(w_); !reason.empty()) throw ArgumentError("invalid weight vector: " + reason);
}

WeightVector WeightVector::uniform(std::size_t n) {
    if (n == 0) throw ArgumentError("uniform weights need n >= 1");
    return WeightVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

WeightVector WeightVector::one_hot(std::size_t n, std::size_t index) {
    if (index >= n) throw ArgumentError("one-hot index out of range");
    std::vector<double> w(n, 0.0);
    w[index] = 1.0;
    return WeightVector(std::move(w));
}

}  // namespace rlalloc
