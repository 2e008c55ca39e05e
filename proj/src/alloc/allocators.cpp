#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlalloc/allocators.hpp"
#include "rlalloc/errors.hpp"

namespace rlalloc::alloc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MomentEstimate estimate_moments(const market::PriceSeries& series, std::size_t t, std::size_t lookback) {
    if (lookback < 2) throw ArgumentError("lookback must be at least 2");
    if (t < lookback || t >= series.num_dates()) {
        throw RangeError("moment window ending at " + std::to_string(t) + " needs " + std::to_string(lookback) +
                         " prior dates within a series of " + std::to_string(series.num_dates()));
    }
    const auto n = static_cast<Eigen::Index>(series.num_assets());
    const auto L = static_cast<Eigen::Index>(lookback);
    MatrixXd r(L, n);
    for (Eigen::Index k = 0; k < L; ++k) {
        const std::size_t s = t - lookback + 1 + static_cast<std::size_t>(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto a = static_cast<std::size_t>(i);
            r(k, i) = series.close(s, a) / series.close(s - 1, a) - 1.0;
        }
    }
    MomentEstimate m;
    m.lookback = lookback;
    m.mu = r.colwise().mean().transpose();
    const MatrixXd centered = r.rowwise() - m.mu.transpose();
    m.omega = centered.transpose() * centered / static_cast<double>(L - 1);
    m.omega = 0.5 * (m.omega + m.omega.transpose());
    m.omega.diagonal().array() += kCovarianceJitter;
    return m;
}

namespace {

void check_moments(const MomentEstimate& m) {
    const auto n = m.mu.size();
    if (n == 0) throw ArgumentError("empty moment estimate");
    if (m.omega.rows() != n || m.omega.cols() != n) throw ArgumentError("covariance size does not match mean");
    if (!m.omega.allFinite() || !m.mu.allFinite()) throw ArgumentError("non-finite moment estimate");
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m.omega, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) throw ArgumentError("covariance is not positive semi-definite");
}

QPProblem simplex_qp(const MatrixXd& P, const VectorXd& q) {
    const auto n = q.size();
    QPProblem p;
    p.P = P;
    p.q = q;
    p.A = MatrixXd::Ones(1, n);
    p.b = VectorXd::Ones(1);
    p.G = -MatrixXd::Identity(n, n);
    p.h = VectorXd::Zero(n);
    return p;
}

// Clears solver round-off (tiny negatives, sum drift) before validation.
WeightVector to_weights(const VectorXd& x) {
    std::vector<double> w(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) w[static_cast<std::size_t>(i)] = std::max(0.0, x[i]);
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(s > 0.0)) throw ConvergenceError("optimizer returned a zero portfolio", 1.0);
    for (auto& v : w) v /= s;
    return WeightVector(std::move(w));
}

}  // namespace

WeightVector equal_weight(std::size_t n) {
    if (n == 0) throw ArgumentError("equal weight needs at least one asset");
    return WeightVector::uniform(n);
}

WeightVector mean_variance(const MomentEstimate& m, std::optional<double> mu_b) {
    check_moments(m);
    const auto n = m.mu.size();
    const double target = mu_b.value_or(m.mu.mean());
    if (!std::isfinite(target)) throw ArgumentError("baseline return must be finite");
    if (target > m.mu.maxCoeff()) {
        throw InfeasibleError("baseline return exceeds every asset's expected return");
    }
    QPProblem p = simplex_qp(m.omega, VectorXd::Zero(n));
    p.G.conservativeResize(n + 1, n);
    p.G.row(n) = -m.mu.transpose();
    p.h.conservativeResize(n + 1);
    p.h[n] = -target;
    return to_weights(qp_solve(p).x);
}

WeightVector min_variance(const MomentEstimate& m) {
    check_moments(m);
    return to_weights(qp_solve(simplex_qp(2.0 * m.omega, VectorXd::Zero(m.mu.size()))).x);
}

WeightVector min_variance_vol_target(const MomentEstimate& m, double sigma_target) {
    if (!(sigma_target > 0.0) || !std::isfinite(sigma_target)) throw ArgumentError("volatility target must be positive");
    const WeightVector w = min_variance(m);
    const VectorXd v = Eigen::Map<const VectorXd>(w.values().data(), m.mu.size());
    const double sigma = std::sqrt(v.dot(m.omega * v));
    const double scale = std::min(1.0, sigma_target / sigma);
    std::vector<double> out{0.0};
    for (double x : w) out.push_back(scale * x);
    out[0] = std::max(0.0, 1.0 - std::accumulate(out.begin() + 1, out.end(), 0.0));
    return WeightVector(std::move(out));
}

WeightVector risk_parity(const MomentEstimate& m, std::size_t max_iterations, double tolerance) {
    check_moments(m);
    const auto n = m.mu.size();
    // Scaling Ω leaves the portfolio unchanged; normalizing it keeps the
    // iteration independent of the return units.
    const double scale = m.omega.diagonal().mean();
    const MatrixXd omega = m.omega / scale;
    if (Eigen::LLT<MatrixXd>(omega).info() != Eigen::Success) {
        throw ArgumentError("risk parity needs a positive definite covariance");
    }
    const double inv_n = 1.0 / static_cast<double>(n);

    // The equal-contribution portfolio is the normalized minimizer of
    // ½xᵀΩx − (1/n)Σ log x_i, a strictly convex problem on x > 0.
    auto objective = [&](const VectorXd& x) { return 0.5 * x.dot(omega * x) - inv_n * x.array().log().sum(); };
    auto residual = [&](const VectorXd& x) {
        return ((x.array() * (omega * x).array()) * static_cast<double>(n) - 1.0).abs().maxCoeff();
    };

    VectorXd x = omega.diagonal().cwiseSqrt().cwiseInverse();
    x /= std::sqrt(x.dot(omega * x) * static_cast<double>(n));
    double res = residual(x);
    for (std::size_t it = 0; it < max_iterations && res > tolerance; ++it) {
        const VectorXd g = omega * x - inv_n * x.cwiseInverse();
        MatrixXd H = omega;
        H.diagonal() += inv_n * x.cwiseInverse().cwiseAbs2();
        const VectorXd step = -H.llt().solve(g);
        const double decrement = -g.dot(step);
        const double f0 = objective(x);
        double t = 1.0;
        while ((x + t * step).minCoeff() <= 0.0) t *= 0.5;
        // Near the optimum the decrease drops below rounding in f; Newton
        // steps are then taken in full.
        if (decrement > 1e-12)
            while (objective(x + t * step) > f0 - 0.25 * t * decrement && t > 1e-16) t *= 0.5;
        const VectorXd next = x + t * step;
        if (next == x) break;
        x = next;
        res = residual(x);
    }
    if (!(res <= tolerance)) throw ConvergenceError("risk parity did not converge", res);
    return to_weights(x);
}

std::string to_string(AllocatorKind kind) {
    switch (kind) {
        case AllocatorKind::EqualWeight: return "equal_weight";
        case AllocatorKind::MeanVariance: return "mean_variance";
        case AllocatorKind::RiskParity: return "risk_parity";
        case AllocatorKind::MinVariance: return "min_variance";
    }
    return "?";
}

std::optional<AllocatorKind> parse_allocator_kind(std::string_view name) {
    for (auto k : {AllocatorKind::EqualWeight, AllocatorKind::MeanVariance, AllocatorKind::RiskParity,
                   AllocatorKind::MinVariance})
        if (to_string(k) == name) return k;
    return std::nullopt;
}

WeightVector allocate(AllocatorKind kind, const market::PriceSeries& series, std::size_t t,
                      const AllocatorOptions& options) {
    if (t >= series.num_dates()) throw RangeError("allocation date is outside the series");
    const bool cash = series.has_cash();
    const std::size_t n = series.num_assets();
    const std::size_t risky = cash ? n - 1 : n;
    if (options.vol_target && (kind != AllocatorKind::MinVariance || !cash)) {
        throw ArgumentError("a volatility target needs min_variance and a cash asset");
    }

    auto embed = [&](const WeightVector& w) {
        if (!cash) return w;
        std::vector<double> out{0.0};
        out.insert(out.end(), w.begin(), w.end());
        return WeightVector(std::move(out));
    };
    if (kind == AllocatorKind::EqualWeight) return embed(equal_weight(risky));

    MomentEstimate m = estimate_moments(series.prefix(t + 1), t, options.lookback);
    if (cash) {
        const auto k = static_cast<Eigen::Index>(risky);
        m.mu = VectorXd(m.mu.tail(k));
        m.omega = MatrixXd(m.omega.bottomRightCorner(k, k));
    }
    switch (kind) {
        case AllocatorKind::MeanVariance: return embed(mean_variance(m, options.mu_b));
        case AllocatorKind::RiskParity: return embed(risk_parity(m));
        case AllocatorKind::MinVariance:
            return options.vol_target ? min_variance_vol_target(m, *options.vol_target) : embed(min_variance(m));
        case AllocatorKind::EqualWeight: break;
    }
    return embed(equal_weight(risky));
}

}  // namespace rlalloc::alloc
