#include "rlalloc/market_data.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "rlalloc/errors.hpp"

namespace rlalloc::market {

namespace {

bool parse_fixed_digits(std::string_view s, int& out) {
    out = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        out = out * 10 + (c - '0');
    }
    return !s.empty();
}

}  // namespace

Date parse_date(std::string_view text) {
    int y = 0, m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' ||
        !parse_fixed_digits(text.substr(0, 4), y) || !parse_fixed_digits(text.substr(5, 2), m) ||
        !parse_fixed_digits(text.substr(8, 2), d)) {
        throw ArgumentError("invalid date '" + std::string(text) + "', expected YYYY-MM-DD");
    }
    Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
              std::chrono::day{static_cast<unsigned>(d)}};
    if (!date.ok()) throw ArgumentError("invalid calendar date '" + std::string(text) + "'");
    return date;
}

std::string format_date(Date d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

struct PriceSeries::Storage {
    std::vector<std::string> tickers;
    std::vector<Date> dates;
    std::vector<double> open, high, low, close;
};

PriceSeries::PriceSeries(std::vector<std::string> tickers, std::vector<Date> dates,
                         std::vector<double> open, std::vector<double> high,
                         std::vector<double> low, std::vector<double> close) {
    const std::size_t n = tickers.size();
    const std::size_t t_len = dates.size();
    if (n == 0) throw ValidationError("price series needs at least one asset");
    if (t_len == 0) throw ValidationError("price series needs at least one date");
    for (const auto* col : {&open, &high, &low, &close}) {
        if (col->size() != n * t_len) {
            throw ValidationError("price array has " + std::to_string(col->size()) +
                                  " cells, expected " + std::to_string(n * t_len));
        }
    }
    for (std::size_t t = 1; t < t_len; ++t) {
        if (!(dates[t - 1] < dates[t])) {
            throw ValidationError("dates not strictly increasing at " + format_date(dates[t]));
        }
    }
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = t * n + i;
            const auto where = [&] { return " for " + tickers[i] + " on " + format_date(dates[t]); };
            if (!(open[k] > 0.0 && high[k] > 0.0 && low[k] > 0.0 && close[k] > 0.0)) {
                throw ValidationError("non-positive price" + where());
            }
            if (low[k] > high[k]) throw ValidationError("low above high" + where());
            if (close[k] < low[k] || close[k] > high[k]) throw ValidationError("close outside [low, high]" + where());
            if (open[k] < low[k] || open[k] > high[k]) throw ValidationError("open outside [low, high]" + where());
        }
    }
    auto s = std::make_shared<Storage>();
    s->tickers = std::move(tickers);
    s->dates = std::move(dates);
    s->open = std::move(open);
    s->high = std::move(high);
    s->low = std::move(low);
    s->close = std::move(close);
    storage_ = std::move(s);
    begin_ = 0;
    end_ = t_len;
}

PriceSeries::PriceSeries(std::shared_ptr<const Storage> storage, std::size_t begin,
                         std::size_t end, std::size_t warmup)
    : storage_(std::move(storage)), begin_(begin), end_(end), warmup_(warmup) {}

std::size_t PriceSeries::num_assets() const noexcept { return storage_->tickers.size(); }
const std::vector<std::string>& PriceSeries::tickers() const noexcept { return storage_->tickers; }

const std::vector<double>& PriceSeries::data_open() const noexcept { return storage_->open; }
const std::vector<double>& PriceSeries::data_high() const noexcept { return storage_->high; }
const std::vector<double>& PriceSeries::data_low() const noexcept { return storage_->low; }
const std::vector<double>& PriceSeries::data_close() const noexcept { return storage_->close; }

double PriceSeries::at(const std::vector<double>& col, std::size_t t, std::size_t i) const {
    if (t >= num_dates() || i >= num_assets()) {
        throw RangeError("price index (" + std::to_string(t) + ", " + std::to_string(i) +
                         ") outside series of " + std::to_string(num_dates()) + " dates");
    }
    return col[(begin_ + t) * num_assets() + i];
}

Date PriceSeries::date(std::size_t t) const {
    if (t >= num_dates()) throw RangeError("date index " + std::to_string(t) + " out of range");
    return storage_->dates[begin_ + t];
}

std::vector<Date> PriceSeries::dates() const {
    return {storage_->dates.begin() + static_cast<std::ptrdiff_t>(begin_),
            storage_->dates.begin() + static_cast<std::ptrdiff_t>(end_)};
}

std::span<const double> PriceSeries::close_row(std::size_t t) const {
    if (t >= num_dates()) throw RangeError("date index " + std::to_string(t) + " out of range");
    return std::span<const double>(storage_->close).subspan((begin_ + t) * num_assets(), num_assets());
}

PriceSeries PriceSeries::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > num_dates() || begin == end) {
        throw RangeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for series of " + std::to_string(num_dates()) + " dates");
    }
    return PriceSeries(storage_, begin_ + begin, begin_ + end, 0);
}

PriceSeries PriceSeries::with_warmup(std::size_t n) const {
    if (n > num_dates()) throw RangeError("warm-up longer than series");
    return PriceSeries(storage_, begin_, end_, n);
}

bool PriceSeries::has_cash() const noexcept { return storage_->tickers.front() == kCashTicker; }

PriceSeries PriceSeries::with_cash() const {
    if (has_cash()) return *this;
    const std::size_t n = num_assets();
    const std::size_t t_len = num_dates();
    std::vector<std::string> tickers{kCashTicker};
    tickers.insert(tickers.end(), storage_->tickers.begin(), storage_->tickers.end());
    std::vector<double> o, h, l, c;
    for (auto* v : {&o, &h, &l, &c}) v->reserve(t_len * (n + 1));
    for (std::size_t t = 0; t < t_len; ++t) {
        for (auto* v : {&o, &h, &l, &c}) v->push_back(1.0);
        for (std::size_t i = 0; i < n; ++i) {
            o.push_back(open(t, i));
            h.push_back(high(t, i));
            l.push_back(low(t, i));
            c.push_back(close(t, i));
        }
    }
    return PriceSeries(std::move(tickers), dates(), std::move(o), std::move(h), std::move(l), std::move(c))
        .with_warmup(warmup_);
}

PriceSeries PriceSeries::select(const std::vector<std::string>& wanted) const {
    std::vector<std::size_t> idx;
    for (const auto& name : wanted) {
        auto it = std::find(storage_->tickers.begin(), storage_->tickers.end(), name);
        if (it == storage_->tickers.end()) throw ArgumentError("unknown ticker '" + name + "'");
        idx.push_back(static_cast<std::size_t>(it - storage_->tickers.begin()));
    }
    const std::size_t t_len = num_dates();
    std::vector<double> o, h, l, c;
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t i : idx) {
            o.push_back(open(t, i));
            h.push_back(high(t, i));
            l.push_back(low(t, i));
            c.push_back(close(t, i));
        }
    }
    return PriceSeries(wanted, dates(), std::move(o), std::move(h), std::move(l), std::move(c))
        .with_warmup(warmup_);
}

// Content equality: tickers, dates and every price, compared exactly.
// Warm-up is a view property and does not participate.
bool operator==(const PriceSeries& a, const PriceSeries& b) {
    if (a.tickers() != b.tickers() || a.num_dates() != b.num_dates()) return false;
    for (std::size_t t = 0; t < a.num_dates(); ++t) {
        if (a.date(t) != b.date(t)) return false;
        for (std::size_t i = 0; i < a.num_assets(); ++i) {
            if (a.open(t, i) != b.open(t, i) || a.high(t, i) != b.high(t, i) ||
                a.low(t, i) != b.low(t, i) || a.close(t, i) != b.close(t, i)) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace rlalloc::market
