#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>

#include "rlalloc/backtest.hpp"
#include "rlalloc/errors.hpp"

namespace rlalloc::backtest {

CostModel::CostModel(double r) : rate(r) {
    if (!(r >= 0.0 && r < 1.0)) throw ArgumentError("cost rate must lie in [0, 1), got " + std::to_string(r));
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

void require_size(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw ArgumentError(std::string(what) + " has " + std::to_string(got) + " entries, expected " +
                            std::to_string(want));
    }
}

}  // namespace

WeightVector roll_weights(const WeightVector& w, std::span<const double> y) {
    require_size(y.size(), w.size(), "relative vector");
    const double gross = dot(w.values(), y);
    if (!(gross > 0.0)) throw ArgumentError("rolling weights needs w·y > 0");
    std::vector<double> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] * y[i] / gross;
    // Division can leave the sum a few ulps from 1; renormalize.
    const double s = std::accumulate(out.begin(), out.end(), 0.0);
    for (auto& v : out) v /= s;
    return WeightVector(std::move(out));
}

StepOutcome portfolio_value_step(double value, const WeightVector& w, std::span<const double> prev,
                                 std::span<const double> y, const CostModel& cost) {
    if (!(value > 0.0)) throw ArgumentError("portfolio value must be positive");
    require_size(prev.size(), w.size(), "previous weights");
    require_size(y.size(), w.size(), "relative vector");
    const double traded = l1_distance(w.values(), prev);
    const double bracket = dot(w.values(), y) - cost.rate * traded;
    if (!(bracket > 0.0)) {
        throw RuinError("transaction costs exceed the gross return (bracket " + std::to_string(bracket) + ")");
    }
    return {value * bracket, value * cost.rate * traded};
}

BacktestResult run_backtest(const Strategy& strategy, const market::PriceSeries& series, const CostModel& cost,
                            std::size_t window) {
    const std::size_t T = series.num_dates();
    const std::size_t n = series.num_assets();
    const std::size_t t0 = std::max(window, series.warmup());
    if (T < t0 + 2) {
        throw ArgumentError("backtest needs at least " + std::to_string(t0 + 2) + " dates, series has " +
                            std::to_string(T));
    }
    BacktestResult r;
    r.tickers = series.tickers();
    r.cost_rate = cost.rate;
    r.dates.push_back(series.date(t0));
    r.value_curve.push_back(1.0);
    r.relatives.emplace_back(n, 1.0);

    std::vector<double> held(n, 0.0);
    for (std::size_t t = t0; t + 1 < T; ++t) {
        const market::PriceSeries history = series.prefix(t + 1);
        WeightVector w = strategy(DecisionContext{history, t, held});
        if (w.size() != n) {
            throw ContractError("strategy returned " + std::to_string(w.size()) + " weights for " +
                                std::to_string(n) + " assets at " + market::format_date(series.date(t)));
        }
        const auto y = market::price_relatives(series, t + 1).y;
        const StepOutcome step = portfolio_value_step(r.value_curve.back(), w, held, y, cost);
        r.rolled_weights.push_back(held);
        r.weights.push_back(w.vec());
        r.period_costs.push_back(step.cost);
        r.value_curve.push_back(step.value);
        r.dates.push_back(series.date(t + 1));
        r.relatives.push_back(y);
        held = roll_weights(w, y).vec();
    }
    r.rolled_weights.push_back(held);
    r.weights.push_back(held);
    r.period_costs.push_back(0.0);
    return r;
}

std::vector<double> log_returns(const BacktestResult& r) {
    std::vector<double> out;
    for (std::size_t k = 1; k < r.value_curve.size(); ++k) out.push_back(std::log(r.value_curve[k] / r.value_curve[k - 1]));
    return out;
}

double reward(const BacktestResult& r) {
    if (r.periods() == 0) throw ArgumentError("reward needs at least one period");
    return std::log(r.value_curve.back() / r.value_curve.front()) / static_cast<double>(r.periods());
}

Metrics compute_metrics(const BacktestResult& r, std::size_t periods_per_year) {
    if (r.value_curve.size() < 2) throw ArgumentError("metrics need at least two values");
    Metrics m;
    const auto& v = r.value_curve;
    m.total_return = 100.0 * (v.back() / v.front() - 1.0);
    m.average_log_return = reward(r);

    const auto lr = log_returns(r);
    if (lr.size() >= 2) {
        const double mean = std::accumulate(lr.begin(), lr.end(), 0.0) / static_cast<double>(lr.size());
        double ss = 0.0;
        for (double x : lr) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / static_cast<double>(lr.size() - 1));
        if (sd > 1e-12) m.sharpe = mean / sd * std::sqrt(static_cast<double>(periods_per_year));
    }

    double peak = v.front(), worst = 0.0;
    for (double x : v) {
        peak = std::max(peak, x);
        worst = std::max(worst, (peak - x) / peak);
    }
    m.max_drawdown = 100.0 * worst;

    // Rebalances after the initial purchase, i.e. rows 1 .. K − 1.
    const std::size_t K = r.periods();
    if (K >= 2) {
        double total = 0.0;
        for (std::size_t k = 1; k < K; ++k) total += l1_distance(r.weights[k], r.rolled_weights[k]);
        m.daily_turnover = 100.0 * total / static_cast<double>(K - 1);
    }
    return m;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json j;
    j["total_return"] = m.total_return;
    j["sharpe"] = m.sharpe ? nlohmann::json(*m.sharpe) : nlohmann::json(nullptr);
    j["max_drawdown"] = m.max_drawdown;
    j["daily_turnover"] = m.daily_turnover;
    j["average_log_return"] = m.average_log_return;
    return j;
}

nlohmann::json result_to_json(const BacktestResult& r, const std::string& strategy, const std::string& config_hash) {
    nlohmann::json j;
    j["strategy"] = strategy;
    j["config_hash"] = config_hash;
    j["metrics"] = metrics_to_json(compute_metrics(r));
    j["periods"] = r.periods();
    j["cost_rate"] = r.cost_rate;
    j["start"] = market::format_date(r.dates.front());
    j["end"] = market::format_date(r.dates.back());
    j["final_value"] = r.value_curve.back();
    return j;
}

void write_curve_csv(const BacktestResult& r, std::ostream& out) {
    out << "date,value,cost,turnover";
    for (std::size_t i = 1; i <= r.tickers.size(); ++i) out << ",w_" << i;
    out << '\n';
    for (std::size_t k = 0; k < r.dates.size(); ++k) {
        out << market::format_date(r.dates[k]) << ',' << format_double(r.value_curve[k]) << ','
            << format_double(r.period_costs[k]) << ',' << format_double(l1_distance(r.weights[k], r.rolled_weights[k]));
        for (double w : r.weights[k]) out << ',' << format_double(w);
        out << '\n';
    }
}

void write_weights_csv(const BacktestResult& r, std::ostream& out) {
    out << "date";
    for (const auto& t : r.tickers) out << ',' << t;
    out << '\n';
    for (std::size_t k = 0; k < r.dates.size(); ++k) {
        out << market::format_date(r.dates[k]);
        for (double w : r.weights[k]) out << ',' << format_double(w);
        out << '\n';
    }
}

}  // namespace rlalloc::backtest
