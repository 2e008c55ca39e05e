#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rlalloc {

/// Long-only, fully invested allocation: every component >= 0 and the
/// components sum to 1 within kSumTolerance. The invariant is checked on
/// construction, so any WeightVector in hand is valid.
class WeightVector {
public:
    static constexpr double kSumTolerance = 1e-9;

    explicit WeightVector(std::vector<double> w);

    static WeightVector uniform(std::size_t n);
    static WeightVector one_hot(std::size_t n, std::size_t index);

    /// Returns a descriptive reason if `w` would violate the invariant,
    /// or an empty string when it is valid.
    static std::string check(std::span<const double> w);

    std::size_t size() const noexcept { return w_.size(); }
    double operator[](std::size_t i) const { return w_[i]; }
    std::span<const double> values() const noexcept { return w_; }
    const std::vector<double>& vec() const noexcept { return w_; }

    auto begin() const noexcept { return w_.begin(); }
    auto end() const noexcept { return w_.end(); }

    friend bool operator==(const WeightVector&, const WeightVector&) = default;

private:
    std::vector<double> w_;
};

}  // namespace rlalloc
