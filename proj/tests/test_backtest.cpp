#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "rlalloc/backtest.hpp"
#include "rlalloc/errors.hpp"

using namespace rlalloc;
using namespace rlalloc::backtest;

namespace {

market::PriceSeries gbm(std::size_t n, std::size_t length, std::uint64_t seed, double vol = 0.01) {
    market::GbmParams p;
    p.n_assets = n;
    p.length = length;
    p.drift.assign(n, 0.0);
    p.vol.assign(n, vol);
    p.seed = seed;
    return market::synth_gbm(p);
}

WeightVector equal(const DecisionContext& c) { return WeightVector::uniform(c.history.num_assets()); }

WeightVector hold_or_first(const DecisionContext& c) {
    double s = 0.0;
    for (double v : c.rolled) s += v;
    if (s == 0.0) return WeightVector::one_hot(c.rolled.size(), 0);
    return WeightVector(std::vector<double>(c.rolled.begin(), c.rolled.end()));
}

// All-in on the asset with the best latest relative; reads only history.
WeightVector momentum(const DecisionContext& c) {
    const auto& h = c.history;
    const std::size_t t = h.num_dates() - 1;
    std::size_t best = 0;
    for (std::size_t i = 1; i < h.num_assets(); ++i)
        if (h.close(t, i) / h.close(t - 1, i) > h.close(t, best) / h.close(t - 1, best)) best = i;
    return WeightVector::one_hot(h.num_assets(), best);
}

BacktestResult curve(std::vector<double> values) {
    BacktestResult r;
    const auto start = std::chrono::sys_days{market::parse_date("2021-01-04")};
    for (std::size_t k = 0; k < values.size(); ++k) {
        r.dates.emplace_back(start + std::chrono::days(k));
        r.weights.push_back({1.0});
        r.rolled_weights.push_back({1.0});
        r.period_costs.push_back(0.0);
        r.relatives.push_back({k ? values[k] / values[k - 1] : 1.0});
    }
    r.tickers = {"X"};
    r.value_curve = std::move(values);
    return r;
}

}  // namespace

TEST_CASE("rolling weights") {
    const auto w = WeightVector(std::vector<double>{0.5, 0.5});
    CHECK(roll_weights(w, std::vector<double>{1.0, 1.0}) == w);
    const auto r = roll_weights(w, std::vector<double>{1.1, 0.9});
    CHECK(r[0] == doctest::Approx(0.55).epsilon(1e-15));
    CHECK(r[1] == doctest::Approx(0.45).epsilon(1e-15));
    CHECK(roll_weights(WeightVector::one_hot(3, 1), std::vector<double>{0.5, 1.7, 2.0}) == WeightVector::one_hot(3, 1));
    CHECK_THROWS_AS(roll_weights(w, std::vector<double>{1.0}), ArgumentError);
}

TEST_CASE("value step arithmetic") {
    const CostModel five_bps(0.0005);
    const auto w = WeightVector(std::vector<double>{0.3, 0.7});
    const auto flat = portfolio_value_step(2.5, w, w.values(), std::vector<double>{1.0, 1.0}, five_bps);
    CHECK(flat.value == 2.5);
    CHECK(flat.cost == 0.0);

    const auto swap = portfolio_value_step(1.0, WeightVector::one_hot(2, 0), std::vector<double>{0.0, 1.0},
                                           std::vector<double>{1.02, 1.0}, five_bps);
    CHECK(std::abs(swap.value - 1.019) <= 1e-15);
    CHECK(std::abs(swap.cost - 0.001) <= 1e-18);

    const std::vector<double> y{1.013, 0.991};
    CHECK(portfolio_value_step(3.0, w, std::vector<double>{1.0, 0.0}, y, CostModel(0.0)).value ==
          3.0 * (0.3 * 1.013 + 0.7 * 0.991));
    CHECK_THROWS_AS(portfolio_value_step(1.0, WeightVector::one_hot(2, 0), std::vector<double>{0.0, 1.0},
                                         std::vector<double>{0.5, 1.0}, CostModel(0.3)),
                    RuinError);
    CHECK_THROWS_AS(CostModel(1.0), ArgumentError);
    CHECK_THROWS_AS(CostModel(-0.1), ArgumentError);
}

TEST_CASE("equal weight on constant prices without costs stays at 1") {
    std::vector<std::string> tickers{"A", "B"};
    std::vector<market::Date> dates;
    const auto start = std::chrono::sys_days{market::parse_date("2021-01-04")};
    for (int k = 0; k < 70; ++k) dates.emplace_back(start + std::chrono::days(k));
    const std::vector<double> px(140, 10.0);
    const market::PriceSeries s(tickers, dates, px, px, px, px);
    const auto r = run_backtest(equal, s, CostModel(0.0));
    CHECK(r.periods() == 19);
    for (double v : r.value_curve) CHECK(v == 1.0);
}

TEST_CASE("buy and hold pays only for the first purchase") {
    const auto s = gbm(3, 200, 4);
    const auto r = run_backtest(hold_or_first, s, CostModel(0.0025));
    CHECK(r.period_costs[0] == doctest::Approx(0.0025).epsilon(1e-15));
    for (std::size_t k = 1; k < r.period_costs.size(); ++k) CHECK(r.period_costs[k] == 0.0);
    CHECK(compute_metrics(r).daily_turnover == 0.0);
}

TEST_CASE("stored components reproduce the value recursion") {
    const auto s = gbm(4, 300, 6);
    const auto r = run_backtest(momentum, s, CostModel(0.001));
    REQUIRE(r.weights.size() == r.dates.size());
    REQUIRE(r.value_curve.size() == r.dates.size());
    for (std::size_t k = 0; k + 1 < r.value_curve.size(); ++k) {
        double gross = 0.0, traded = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            gross += r.weights[k][i] * r.relatives[k + 1][i];
            traded += std::abs(r.weights[k][i] - r.rolled_weights[k][i]);
        }
        CHECK(std::abs(r.value_curve[k + 1] - r.value_curve[k] * (gross - 0.001 * traded)) <= 1e-12);
        CHECK(std::abs(r.period_costs[k] - r.value_curve[k] * 0.001 * traded) <= 1e-15);
    }
}

TEST_CASE("frictionless equal weight telescopes to the product of gross returns") {
    const auto s = gbm(5, 400, 8);
    const auto r = run_backtest(equal, s, CostModel(0.0));
    double v = 1.0;
    for (std::size_t t = 50; t + 1 < s.num_dates(); ++t) {
        double g = 0.0;
        for (std::size_t i = 0; i < 5; ++i) g += 0.2 * s.close(t + 1, i) / s.close(t, i);
        v *= g;
    }
    CHECK(std::abs(r.value_curve.back() - v) <= 1e-10);
}

TEST_CASE("warm-up dates are context only") {
    const auto s = gbm(2, 120, 9).slice(30, 120).with_warmup(60);
    const auto r = run_backtest(equal, s);
    CHECK(r.dates.front() == s.date(60));
    CHECK(r.periods() == 29);
}

TEST_CASE("strategies returning the wrong size are rejected") {
    const auto s = gbm(3, 80, 1);
    CHECK_THROWS_AS(run_backtest([](const DecisionContext&) { return WeightVector::uniform(2); }, s), ContractError);
    CHECK_THROWS_AS(run_backtest(equal, gbm(3, 51, 1)), ArgumentError);
}

TEST_CASE("metrics on a hand-made curve") {
    const auto m = compute_metrics(curve({1.0, 1.2, 0.9, 1.1}));
    CHECK(std::abs(m.max_drawdown - 25.0) <= 1e-12);
    CHECK(std::abs(m.total_return - 10.0) <= 1e-12);
    CHECK(m.sharpe.has_value());
}

TEST_CASE("a constant log return has no Sharpe ratio") {
    std::vector<double> v{1.0};
    for (int k = 0; k < 30; ++k) v.push_back(v.back() * std::exp(0.001));
    const auto m = compute_metrics(curve(v));
    CHECK_FALSE(m.sharpe.has_value());
    CHECK(metrics_to_json(m)["sharpe"].is_null());
    CHECK(m.max_drawdown == 0.0);
}

TEST_CASE("reward identities") {
    CHECK(reward(curve({1.0, 1.0, 1.0})) == 0.0);
    std::vector<double> v(11, 1.0);
    for (int k = 1; k <= 10; ++k) v[static_cast<std::size_t>(k)] = std::pow(2.0, k / 10.0);
    CHECK(std::abs(reward(curve(v)) - std::log(2.0) / 10.0) <= 1e-15);
    const auto r = curve({1.0, std::exp(1.0)});
    CHECK(std::abs(compute_metrics(r).total_return - 100.0 * (std::exp(1.0) - 1.0)) <= 1e-12);
    CHECK(std::abs(reward(r) - 1.0) <= 1e-15);
}

TEST_CASE("property: metrics agree with a straight-line recomputation") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto s = gbm(3, 250, seed, 0.02);
        const auto r = run_backtest(momentum, s, CostModel(0.0005));
        const auto m = compute_metrics(r);
        const auto& v = r.value_curve;
        const std::size_t K = v.size() - 1;

        double sum = 0.0;
        for (std::size_t k = 1; k <= K; ++k) sum += std::log(v[k] / v[k - 1]);
        CHECK(std::abs(reward(r) - sum / static_cast<double>(K)) <= 1e-12);

        const double mean = sum / static_cast<double>(K);
        double ss = 0.0;
        for (std::size_t k = 1; k <= K; ++k) ss += std::pow(std::log(v[k] / v[k - 1]) - mean, 2);
        REQUIRE(m.sharpe.has_value());
        CHECK(std::abs(*m.sharpe - mean / std::sqrt(ss / static_cast<double>(K - 1)) * std::sqrt(252.0)) <= 1e-10);

        double dd = 0.0;
        for (std::size_t a = 0; a <= K; ++a)
            for (std::size_t b = a; b <= K; ++b) dd = std::max(dd, 1.0 - v[b] / v[a]);
        CHECK(std::abs(m.max_drawdown - 100.0 * dd) <= 1e-10);

        double to = 0.0;
        for (std::size_t k = 1; k < K; ++k)
            for (std::size_t i = 0; i < 3; ++i) to += std::abs(r.weights[k][i] - r.rolled_weights[k][i]);
        CHECK(std::abs(m.daily_turnover - 100.0 * to / static_cast<double>(K - 1)) <= 1e-10);
    }
}

TEST_CASE("property: reward is non-increasing in the cost rate") {
    const auto s = gbm(4, 200, 12, 0.02);
    double prev = reward(run_backtest(momentum, s, CostModel(0.0)));
    for (double c : {0.0001, 0.0005, 0.001, 0.005, 0.01}) {
        const double cur = reward(run_backtest(momentum, s, CostModel(c)));
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("property: mutating prices after t leaves earlier decisions unchanged") {
    const auto s = gbm(3, 150, 14, 0.02);
    const auto base = run_backtest(momentum, s);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = 50 + rng() % 98;
        std::vector<double> o, h, l, c;
        for (std::size_t d = 0; d < s.num_dates(); ++d)
            for (std::size_t i = 0; i < 3; ++i) {
                const double f = d > t ? 1.0 + 0.5 * static_cast<double>(rng() % 100) / 100.0 : 1.0;
                o.push_back(s.open(d, i) * f);
                h.push_back(s.high(d, i) * f);
                l.push_back(s.low(d, i) * f);
                c.push_back(s.close(d, i) * f);
            }
        const market::PriceSeries mutated(s.tickers(), s.dates(), o, h, l, c);
        const auto r = run_backtest(momentum, mutated);
        for (std::size_t k = 0; k + 50 <= t; ++k) CHECK(r.weights[k] == base.weights[k]);
    }
}

TEST_CASE("CSV and JSON exports") {
    const auto s = gbm(2, 60, 2);
    const auto r = run_backtest(equal, s);
    std::ostringstream csv;
    write_curve_csv(r, csv);
    const std::string text = csv.str();
    CHECK(text.rfind("date,value,cost,turnover,w_1,w_2\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(r.dates.size() + 1));
    std::ostringstream wcsv;
    write_weights_csv(r, wcsv);
    CHECK(wcsv.str().rfind("date,S0,S1\n", 0) == 0);
    const auto j = result_to_json(r, "equal_weight", "abc");
    CHECK(j["strategy"] == "equal_weight");
    CHECK(j["metrics"].contains("daily_turnover"));
    CHECK(format_double(0.1) == "0.1");
}
