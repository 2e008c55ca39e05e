#include <cmath>

#include "rlalloc/errors.hpp"
#include "rlalloc/market_data.hpp"

namespace rlalloc::market {

PriceTensor build_price_tensor(const PriceSeries& series, std::size_t t, std::size_t window) {
    if (window < 1) throw ArgumentError("window must be positive");
    if (t < window || t >= series.num_dates()) {
        throw RangeError("price tensor at index " + std::to_string(t) + " needs " + std::to_string(window) +
                         " dates of history within " + std::to_string(series.num_dates()));
    }
    const std::size_t n = series.num_assets();
    PriceTensor tensor;
    tensor.n_assets = n;
    tensor.window = window;
    tensor.anchor_date = series.date(t);
    tensor.values.resize(PriceTensor::kChannels * n * window);
    const std::size_t first = t + 1 - window;
    for (std::size_t i = 0; i < n; ++i) {
        const double anchor = series.close(t, i);
        for (std::size_t k = 0; k < window; ++k) {
            const std::size_t s = first + k;
            tensor.values[(0 * n + i) * window + k] = series.high(s, i) / anchor;
            tensor.values[(1 * n + i) * window + k] = series.low(s, i) / anchor;
            tensor.values[(2 * n + i) * window + k] = series.close(s, i) / anchor;
        }
    }
    return tensor;
}

RelativeVector price_relatives(const PriceSeries& series, std::size_t t, bool include_cash) {
    if (t == 0 || t >= series.num_dates()) {
        throw RangeError("price relatives need 1 <= t < " + std::to_string(series.num_dates()) + ", got " +
                         std::to_string(t));
    }
    RelativeVector rel;
    rel.has_cash = include_cash;
    rel.y.reserve(series.num_assets() + (include_cash ? 1 : 0));
    if (include_cash) rel.y.push_back(1.0);
    const auto now = series.close_row(t);
    const auto before = series.close_row(t - 1);
    for (std::size_t i = 0; i < now.size(); ++i) rel.y.push_back(now[i] / before[i]);
    return rel;
}

std::pair<PriceSeries, PriceSeries> split_train_test(const PriceSeries& series, double train_fraction,
                                                     std::size_t window) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ArgumentError("train fraction must lie in (0, 1), got " + std::to_string(train_fraction));
    }
    const std::size_t t_len = series.num_dates();
    if (t_len < 2) throw ArgumentError("cannot split a series shorter than 2 dates");
    const auto cut = static_cast<std::size_t>(std::floor(static_cast<double>(t_len) * train_fraction));
    if (cut == 0 || cut >= t_len) {
        throw ArgumentError("train fraction leaves an empty segment for " + std::to_string(t_len) + " dates");
    }
    const std::size_t warmup = std::min(window, cut);
    PriceSeries train = series.slice(0, cut);
    PriceSeries test = series.slice(cut - warmup, t_len).with_warmup(warmup);
    return {std::move(train), std::move(test)};
}

}  // namespace rlalloc::market
