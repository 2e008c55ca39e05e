#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "rlalloc/errors.hpp"
#include "rlalloc/market_data.hpp"

namespace rlalloc::market {

namespace {

// Factor L with L * L^T = corr, tolerating positive semi-definite input.
Eigen::MatrixXd correlation_factor(const GbmParams& p) {
    const auto n = static_cast<Eigen::Index>(p.n_assets);
    if (p.corr.empty()) return Eigen::MatrixXd::Identity(n, n);
    if (p.corr.size() != p.n_assets * p.n_assets) throw ArgumentError("correlation matrix must be n x n");
    Eigen::MatrixXd corr = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        p.corr.data(), n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(corr(i, i) - 1.0) > 1e-12) throw ArgumentError("correlation diagonal must be 1");
        for (Eigen::Index j = 0; j < i; ++j) {
            if (std::abs(corr(i, j) - corr(j, i)) > 1e-12) throw ArgumentError("correlation matrix not symmetric");
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
        throw ArgumentError("correlation matrix not positive semi-definite (min eigenvalue " +
                            std::to_string(eig.eigenvalues().minCoeff()) + ")");
    }
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

std::vector<Date> weekday_calendar(Date start, std::size_t count) {
    std::vector<Date> out;
    out.reserve(count);
    std::chrono::sys_days day{start};
    while (out.size() < count) {
        const std::chrono::weekday wd{day};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) out.emplace_back(day);
        day += std::chrono::days{1};
    }
    return out;
}

}  // namespace

PriceSeries synth_gbm(const GbmParams& p) {
    if (p.n_assets == 0 || p.length == 0) throw ArgumentError("synthetic market needs assets and dates");
    if (p.drift.size() != p.n_assets || p.vol.size() != p.n_assets) {
        throw ArgumentError("drift and vol need one entry per asset");
    }
    for (double v : p.vol) {
        if (!(v >= 0.0)) throw ArgumentError("volatility must be non-negative");
    }
    if (!(p.initial_price > 0.0)) throw ArgumentError("initial price must be positive");
    const Eigen::MatrixXd factor = correlation_factor(p);
    const std::size_t n = p.n_assets;

    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> o(n * p.length), h(n * p.length), l(n * p.length), c(n * p.length);
    std::vector<double> log_level(n, 0.0);
    Eigen::VectorXd z(static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < p.length; ++t) {
        if (t > 0) {
            for (std::size_t i = 0; i < n; ++i) z(static_cast<Eigen::Index>(i)) = normal(rng);
            const Eigen::VectorXd shock = factor * z;
            for (std::size_t i = 0; i < n; ++i) {
                log_level[i] += p.drift[i] + p.vol[i] * shock(static_cast<Eigen::Index>(i));
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = t * n + i;
            const double close = p.initial_price * std::exp(log_level[i]);
            // Intraday range proportional to the asset's volatility, capped so low stays positive.
            const double up = std::min(0.5, std::abs(normal(rng)) * p.vol[i] * p.range_scale);
            const double down = std::min(0.5, std::abs(normal(rng)) * p.vol[i] * p.range_scale);
            c[k] = close;
            h[k] = close * (1.0 + up);
            l[k] = close * (1.0 - down);
            const double prev_close = t > 0 ? c[k - n] : close;
            o[k] = std::clamp(prev_close, l[k], h[k]);
        }
    }
    std::vector<std::string> tickers;
    for (std::size_t i = 0; i < n; ++i) tickers.push_back("S" + std::to_string(i));
    return PriceSeries(std::move(tickers), weekday_calendar(p.start_date, p.length), std::move(o), std::move(h),
                       std::move(l), std::move(c));
}

}  // namespace rlalloc::market
