#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "rlalloc/market_data.hpp"
#include "rlalloc/weights.hpp"

namespace rlalloc::alloc {

constexpr std::size_t kDefaultLookback = 50;
constexpr double kCovarianceJitter = 1e-8;

struct MomentEstimate {
    Eigen::VectorXd mu;     // mean simple daily return
    Eigen::MatrixXd omega;  // sample covariance (n - 1 divisor) plus jitter
    std::size_t lookback = kDefaultLookback;
};

/// Moments of the `lookback` simple returns ending at t, using closes
/// t - lookback .. t only.
MomentEstimate estimate_moments(const market::PriceSeries& series, std::size_t t,
                                std::size_t lookback = kDefaultLookback);

// ---------------------------------------------------------------------------
// Quadratic programming

/// min ½xᵀPx + qᵀx  s.t.  A x = b,  G x ≤ h.
struct QPProblem {
    Eigen::MatrixXd P;
    Eigen::VectorXd q;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::MatrixXd G;
    Eigen::VectorXd h;

    std::size_t size() const { return static_cast<std::size_t>(q.size()); }
};

struct QPSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd eq_multipliers;    // λ in P x + q = Aᵀλ - Gᵀν
    Eigen::VectorXd ineq_multipliers;  // ν ≥ 0
    std::size_t iterations = 0;
    double objective = 0.0;
};

struct KktResiduals {
    double primal = 0.0;           // max equality residual or inequality violation
    double stationarity = 0.0;     // ‖P x + q − Aᵀλ + Gᵀν‖∞
    double dual = 0.0;             // max negative part of ν
    double complementarity = 0.0;  // max |ν_i (h − G x)_i|
};

/// Dual active-set method. Deterministic: the most violated constraint
/// enters, ties going to the lowest index.
QPSolution qp_solve(const QPProblem& problem, std::size_t max_iterations = 10000);

/// Evaluates the optimality conditions of a candidate solution directly from
/// the problem data.
KktResiduals kkt_residuals(const QPProblem& problem, const QPSolution& solution);

// ---------------------------------------------------------------------------
// Allocators

WeightVector equal_weight(std::size_t n);

/// min ½wᵀΩw  s.t.  μᵀw ≥ μ_b, Σw = 1, w ≥ 0. μ_b defaults to mean(μ).
WeightVector mean_variance(const MomentEstimate& m, std::optional<double> mu_b = std::nullopt);

/// Equal risk contributions w_i (Ωw)_i over the long-only simplex.
WeightVector risk_parity(const MomentEstimate& m, std::size_t max_iterations = 10000, double tolerance = 1e-10);

/// min wᵀΩw  s.t.  Σw = 1, w ≥ 0.
WeightVector min_variance(const MomentEstimate& m);

/// Minimum-variance weights scaled by min(1, σ_target / σ(w)) with the
/// remainder in cash. The result has n + 1 entries, cash first.
WeightVector min_variance_vol_target(const MomentEstimate& m, double sigma_target);

enum class AllocatorKind { EqualWeight, MeanVariance, RiskParity, MinVariance };

std::string to_string(AllocatorKind kind);
std::optional<AllocatorKind> parse_allocator_kind(std::string_view name);

struct AllocatorOptions {
    std::size_t lookback = kDefaultLookback;
    std::optional<double> mu_b;
    std::optional<double> vol_target;  // min variance only; needs a cash asset at index 0
};

/// Weights at date index t of `series` (data after t is never read). When
/// the series has a cash column the optimizers act on the risky assets and
/// give cash zero weight, except for the volatility-target variant.
WeightVector allocate(AllocatorKind kind, const market::PriceSeries& series, std::size_t t,
                      const AllocatorOptions& options = {});

}  // namespace rlalloc::alloc
