#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlalloc/market_data.hpp"
#include "rlalloc/weights.hpp"

namespace rlalloc::backtest {

constexpr double kDefaultCostRate = 0.0005;

struct CostModel {
    double rate = kDefaultCostRate;  // charged per unit of traded weight

    explicit CostModel(double r = kDefaultCostRate);
};

/// w_i y_i / (w·y).
WeightVector roll_weights(const WeightVector& w, std::span<const double> y);

struct StepOutcome {
    double value = 0.0;
    double cost = 0.0;
};

/// V · [(w·y) − c Σ|w − prev|]. `prev` may be the all-zero (all-cash) vector.
/// Throws RuinError when the bracket is not positive.
StepOutcome portfolio_value_step(double value, const WeightVector& w, std::span<const double> prev,
                                 std::span<const double> y, const CostModel& cost);

/// What a strategy may see when deciding at date index t.
struct DecisionContext {
    const market::PriceSeries& history;  // dates 0..t only
    std::size_t t;
    std::span<const double> rolled;      // current drifted holdings; zeros before the first trade
};

using Strategy = std::function<WeightVector(const DecisionContext&)>;

/// Row k describes date k of the run. The strategy chooses weights[k] at
/// the close of that date from holdings rolled_weights[k], paying
/// period_costs[k]; value_curve[k + 1] = value_curve[k] (weights[k]·relatives[k + 1])
/// − period_costs[k]. The last row holds without trading.
struct BacktestResult {
    std::vector<std::string> tickers;
    std::vector<market::Date> dates;
    std::vector<double> value_curve;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> rolled_weights;
    std::vector<double> period_costs;
    std::vector<std::vector<double>> relatives;  // relatives[0] is all ones
    double cost_rate = 0.0;

    std::size_t periods() const { return value_curve.empty() ? 0 : value_curve.size() - 1; }
};

/// Decides at every date t from max(window, series.warmup()) to T − 2 and
/// earns the relatives of t + 1. The initial position is all cash.
BacktestResult run_backtest(const Strategy& strategy, const market::PriceSeries& series,
                            const CostModel& cost = CostModel{}, std::size_t window = market::kDefaultWindow);

struct Metrics {
    double total_return = 0.0;          // percent
    std::optional<double> sharpe;       // annualized; empty when returns have no variance
    double max_drawdown = 0.0;          // percent
    double daily_turnover = 0.0;        // percent, excluding the initial purchase
    double average_log_return = 0.0;
};

constexpr std::size_t kPeriodsPerYear = 252;

Metrics compute_metrics(const BacktestResult& result, std::size_t periods_per_year = kPeriodsPerYear);

/// log(V_T / V_0) / T.
double reward(const BacktestResult& result);

std::vector<double> log_returns(const BacktestResult& result);

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json result_to_json(const BacktestResult& result, const std::string& strategy, const std::string& config_hash);

/// `date,value,cost,turnover,w_1..w_N`.
void write_curve_csv(const BacktestResult& result, std::ostream& out);
/// `date,<ticker>...` of the chosen weights.
void write_weights_csv(const BacktestResult& result, std::ostream& out);

/// Shortest round-trip decimal form, so repeated runs print identical bytes.
std::string format_double(double v);

}  // namespace rlalloc::backtest
