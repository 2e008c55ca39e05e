#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "rlalloc/errors.hpp"
#include "rlalloc/market_data.hpp"

namespace rlalloc::market {

namespace {

struct Bar {
    double open, high, low, close;
};

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string_view trim_eol(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
    return s;
}

double parse_price(std::string_view field, std::size_t line, const char* name) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || field.empty()) {
        throw ParseError(line, std::string("cannot parse ") + name + " '" + std::string(field) + "'");
    }
    return value;
}

std::string shortest(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

}  // namespace

PriceSeries ingest_ohlc(const std::filesystem::path& path, const IngestOptions& options) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return ingest_ohlc(in, options);
}

PriceSeries ingest_ohlc(std::istream& in, const IngestOptions& options) {
    const CsvSchema& schema = options.schema;
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError(1, "missing header");

    // Map each required field name to its column position.
    const auto header = split_fields(trim_eol(line));
    const std::array<const std::string*, 6> names{&schema.date, &schema.ticker, &schema.open,
                                                  &schema.high, &schema.low, &schema.close};
    std::array<std::size_t, 6> col{};
    for (std::size_t f = 0; f < names.size(); ++f) {
        auto it = std::find(header.begin(), header.end(), std::string_view(*names[f]));
        if (it == header.end()) throw ParseError(1, "header lacks column '" + *names[f] + "'");
        col[f] = static_cast<std::size_t>(it - header.begin());
    }

    std::map<std::string, std::map<Date, Bar>> by_ticker;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = trim_eol(line);
        if (row.empty()) continue;
        const auto fields = split_fields(row);
        if (fields.size() != header.size()) {
            throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                          std::to_string(fields.size()));
        }
        Date date;
        try {
            date = parse_date(fields[col[0]]);
        } catch (const ArgumentError& e) {
            throw ParseError(line_no, e.what());
        }
        const std::string ticker(fields[col[1]]);
        if (ticker.empty()) throw ParseError(line_no, "empty ticker");
        Bar bar{parse_price(fields[col[2]], line_no, "open"), parse_price(fields[col[3]], line_no, "high"),
                parse_price(fields[col[4]], line_no, "low"), parse_price(fields[col[5]], line_no, "close")};
        if (!(bar.open > 0 && bar.high > 0 && bar.low > 0 && bar.close > 0)) {
            throw ValidationError("line " + std::to_string(line_no) + ": non-positive price for " + ticker);
        }
        if (bar.low > bar.high || bar.close < bar.low || bar.close > bar.high || bar.open < bar.low ||
            bar.open > bar.high) {
            throw ValidationError("line " + std::to_string(line_no) + ": inconsistent OHLC bar for " + ticker);
        }
        if (!by_ticker[ticker].emplace(date, bar).second) {
            throw ParseError(line_no, "duplicate row for " + ticker + " on " + format_date(date));
        }
    }
    if (by_ticker.empty()) throw DataError("no data rows");

    // Intersection calendar: dates between the latest first observation and
    // the earliest last observation, drawn from the union of all tickers.
    Date first = by_ticker.begin()->second.begin()->first;
    Date last = by_ticker.begin()->second.rbegin()->first;
    for (const auto& [_, bars] : by_ticker) {
        first = std::max(first, bars.begin()->first);
        last = std::min(last, bars.rbegin()->first);
    }
    if (first > last) throw DataError("empty intersection calendar across tickers");
    std::vector<Date> calendar;
    {
        std::map<Date, bool> all;
        for (const auto& [_, bars] : by_ticker) {
            for (auto it = bars.lower_bound(first); it != bars.end() && it->first <= last; ++it) all[it->first] = true;
        }
        for (const auto& [d, _] : all) calendar.push_back(d);
    }

    const std::size_t n = by_ticker.size();
    const std::size_t t_len = calendar.size();
    std::vector<std::string> tickers;
    std::vector<double> o(n * t_len), h(n * t_len), l(n * t_len), c(n * t_len);
    std::size_t i = 0;
    for (const auto& [ticker, bars] : by_ticker) {
        tickers.push_back(ticker);
        std::size_t filled = 0;
        std::optional<Bar> prev;
        for (std::size_t t = 0; t < t_len; ++t) {
            auto it = bars.find(calendar[t]);
            Bar bar;
            if (it != bars.end()) {
                bar = it->second;
            } else {
                // calendar[0] is the latest first date, so every ticker has it.
                bar = *prev;
                ++filled;
            }
            prev = bar;
            const std::size_t k = t * n + i;
            o[k] = bar.open;
            h[k] = bar.high;
            l[k] = bar.low;
            c[k] = bar.close;
        }
        const double fraction = static_cast<double>(filled) / static_cast<double>(t_len);
        if (fraction > options.max_fill_fraction) {
            throw DataError("ticker " + ticker + " has " + std::to_string(filled) + " of " +
                            std::to_string(t_len) + " dates forward-filled");
        }
        ++i;
    }
    return PriceSeries(std::move(tickers), std::move(calendar), std::move(o), std::move(h), std::move(l),
                       std::move(c));
}

void write_ohlc(const PriceSeries& series, std::ostream& out) {
    out << "date,ticker,open,high,low,close\n";
    for (std::size_t t = 0; t < series.num_dates(); ++t) {
        const std::string d = format_date(series.date(t));
        for (std::size_t i = 0; i < series.num_assets(); ++i) {
            out << d << ',' << series.tickers()[i] << ',' << shortest(series.open(t, i)) << ','
                << shortest(series.high(t, i)) << ',' << shortest(series.low(t, i)) << ','
                << shortest(series.close(t, i)) << '\n';
        }
    }
}

void write_ohlc(const PriceSeries& series, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_ohlc(series, out);
}

}  // namespace rlalloc::market
