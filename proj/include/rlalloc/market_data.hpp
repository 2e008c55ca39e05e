#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rlalloc::market {

using Date = std::chrono::year_month_day;

/// Parses a strict ISO-8601 calendar date (`YYYY-MM-DD`).
/// Throws ArgumentError on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date d);

inline constexpr const char* kCashTicker = "CASH";

/// Immutable, calendar-aligned OHLC history for a fixed asset universe.
///
/// Prices are stored row-major as (dates x assets). Copies and slices share
/// the underlying storage, so handing a prefix of the series to a strategy
/// costs nothing and cannot leak later dates.
class PriceSeries {
public:
    /// Validates every invariant: matching shapes, strictly increasing
    /// dates, strictly positive prices, low <= open/close <= high.
    PriceSeries(std::vector<std::string> tickers, std::vector<Date> dates,
                std::vector<double> open, std::vector<double> high,
                std::vector<double> low, std::vector<double> close);

    std::size_t num_dates() const noexcept { return end_ - begin_; }
    std::size_t num_assets() const noexcept;
    const std::vector<std::string>& tickers() const noexcept;

    Date date(std::size_t t) const;
    std::vector<Date> dates() const;

    double open(std::size_t t, std::size_t i) const { return at(data_open(), t, i); }
    double high(std::size_t t, std::size_t i) const { return at(data_high(), t, i); }
    double low(std::size_t t, std::size_t i) const { return at(data_low(), t, i); }
    double close(std::size_t t, std::size_t i) const { return at(data_close(), t, i); }

    /// Close prices of every asset at date t.
    std::span<const double> close_row(std::size_t t) const;

    /// Dates [begin, end) of this series, sharing storage. Warm-up is cleared.
    PriceSeries slice(std::size_t begin, std::size_t end) const;
    PriceSeries prefix(std::size_t end) const { return slice(0, end).with_warmup(std::min(warmup_, end)); }

    /// Leading dates that provide history only and are never traded.
    std::size_t warmup() const noexcept { return warmup_; }
    std::size_t traded_dates() const noexcept { return num_dates() - warmup_; }
    PriceSeries with_warmup(std::size_t n) const;

    /// True when asset 0 is the synthetic constant-price cash asset.
    bool has_cash() const noexcept;
    /// Prepends a constant-price (1.0) cash asset. No-op if already present.
    PriceSeries with_cash() const;
    /// Keeps only the listed tickers, in the given order.
    PriceSeries select(const std::vector<std::string>& tickers) const;

    friend bool operator==(const PriceSeries& a, const PriceSeries& b);

private:
    struct Storage;

    PriceSeries(std::shared_ptr<const Storage> storage, std::size_t begin, std::size_t end,
                std::size_t warmup);

    const std::vector<double>& data_open() const noexcept;
    const std::vector<double>& data_high() const noexcept;
    const std::vector<double>& data_low() const noexcept;
    const std::vector<double>& data_close() const noexcept;
    double at(const std::vector<double>& col, std::size_t t, std::size_t i) const;

    std::shared_ptr<const Storage> storage_;
    std::size_t begin_ = 0;
    std::size_t end_ = 0;
    std::size_t warmup_ = 0;
};

// ---------------------------------------------------------------------------
// CSV ingestion

/// Column names for the six required fields. Defaults match the canonical
/// header `date,ticker,open,high,low,close`.
struct CsvSchema {
    std::string date = "date";
    std::string ticker = "ticker";
    std::string open = "open";
    std::string high = "high";
    std::string low = "low";
    std::string close = "close";
};

struct IngestOptions {
    CsvSchema schema;
    /// Assets whose forward-filled share of the calendar exceeds this are rejected.
    double max_fill_fraction = 0.10;
};

PriceSeries ingest_ohlc(const std::filesystem::path& path, const IngestOptions& options = {});
PriceSeries ingest_ohlc(std::istream& in, const IngestOptions& options = {});

/// Writes the canonical CSV: header, then rows ordered by date then ticker.
/// Prices use the shortest round-trip decimal form, so re-ingesting the
/// output reproduces the series bit for bit.
void write_ohlc(const PriceSeries& series, std::ostream& out);
void write_ohlc(const PriceSeries& series, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// State tensors and price relatives

inline constexpr std::size_t kDefaultWindow = 50;

/// (3 x assets x window) high/low/close window, each asset scaled by its
/// close at the anchor date so the last close column is exactly 1.
struct PriceTensor {
    static constexpr std::size_t kChannels = 3;  // high, low, close

    std::size_t n_assets = 0;
    std::size_t window = 0;
    Date anchor_date{};
    std::vector<double> values;

    double at(std::size_t channel, std::size_t asset, std::size_t k) const {
        return values[(channel * n_assets + asset) * window + k];
    }
};

PriceTensor build_price_tensor(const PriceSeries& series, std::size_t t,
                               std::size_t window = kDefaultWindow);

/// Gross one-period relatives close_t / close_{t-1}; optional leading cash 1.
struct RelativeVector {
    std::vector<double> y;
    bool has_cash = false;
};

RelativeVector price_relatives(const PriceSeries& series, std::size_t t, bool include_cash = false);

/// Chronological split at floor(T * train_fraction). The test half keeps the
/// last `window` train dates as warm-up context.
std::pair<PriceSeries, PriceSeries> split_train_test(const PriceSeries& series,
                                                     double train_fraction = 0.75,
                                                     std::size_t window = kDefaultWindow);

// ---------------------------------------------------------------------------
// Synthetic markets

struct GbmParams {
    std::size_t n_assets = 0;
    std::size_t length = 0;
    std::vector<double> drift;   // per-asset daily log drift
    std::vector<double> vol;     // per-asset daily log volatility
    std::vector<double> corr;    // row-major (n x n); empty means identity
    std::uint64_t seed = 0;
    double initial_price = 100.0;
    /// Scale of the |noise| used to place high/low around the close.
    double range_scale = 0.5;
    Date start_date = Date{std::chrono::year{2000}, std::chrono::January, std::chrono::day{3}};
};

/// Correlated geometric Brownian motion on a weekday calendar.
PriceSeries synth_gbm(const GbmParams& params);

}  // namespace rlalloc::market
