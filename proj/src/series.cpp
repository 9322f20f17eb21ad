#include "volforge/series.hpp"

#include "volforge/calendar.hpp"
#include "volforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace volforge {

Aggregation parse_aggregation(std::string_view name) {
    if (name == "hour") return Aggregation::hour;
    if (name == "day") return Aggregation::day;
    if (name == "month") return Aggregation::month;
    throw std::invalid_argument("unknown aggregation '" + std::string(name) + "' (expected hour, day or month)");
}

std::string_view to_string(Aggregation aggregation) {
    switch (aggregation) {
        case Aggregation::hour: return "hour";
        case Aggregation::day: return "day";
        case Aggregation::month: return "month";
    }
    return "?";
}

Timestamp bucket_start(Timestamp t, Aggregation aggregation) {
    switch (aggregation) {
        case Aggregation::hour: return floor_div(t, 3600) * 3600;
        case Aggregation::day: return floor_div(t, 86400) * 86400;
        case Aggregation::month: {
            const CivilDate date = civil_from_days(floor_div(t, 86400));
            return days_from_civil({date.year, date.month, 1}) * 86400;
        }
    }
    throw std::invalid_argument("unknown aggregation");
}

std::string bucket_label(Timestamp start, Aggregation aggregation) {
    const CivilDate date = civil_from_days(floor_div(start, 86400));
    char buf[32];
    switch (aggregation) {
        case Aggregation::hour: {
            const auto hour = static_cast<int>(floor_div(start - floor_div(start, 86400) * 86400, 3600));
            std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d", static_cast<long long>(date.year),
                          date.month, date.day, hour);
            break;
        }
        case Aggregation::day:
            std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(date.year), date.month,
                          date.day);
            break;
        case Aggregation::month:
            std::snprintf(buf, sizeof buf, "%04lld-%02u", static_cast<long long>(date.year), date.month);
            break;
    }
    return buf;
}

PriceSeries::PriceSeries(std::vector<Timestamp> timestamps, std::vector<double> prices,
                         std::int64_t base_frequency_seconds)
    : timestamps_(std::move(timestamps)), prices_(std::move(prices)), base_frequency_(base_frequency_seconds) {
    if (timestamps_.size() != prices_.size())
        throw std::invalid_argument("price series: timestamp and price counts differ");
    if (prices_.size() < 2) throw std::invalid_argument("price series needs at least 2 observations");
    if (base_frequency_ <= 0) throw std::invalid_argument("price series: base frequency must be positive");
    for (std::size_t i = 0; i < prices_.size(); ++i) {
        if (!std::isfinite(prices_[i]) || prices_[i] <= 0.0)
            throw std::domain_error("price at index " + std::to_string(i) + " is not a positive finite number");
        if (i > 0 && timestamps_[i] <= timestamps_[i - 1])
            throw std::invalid_argument("timestamps not strictly increasing at index " + std::to_string(i));
    }
}

ReturnSeries log_returns(const PriceSeries& prices) {
    const auto p = prices.prices();
    const auto t = prices.timestamps();
    ReturnSeries out;
    out.timestamps.assign(t.begin() + 1, t.end());
    out.returns.reserve(p.size() - 1);
    for (std::size_t j = 0; j + 1 < p.size(); ++j) out.returns.push_back(std::log(p[j + 1]) - std::log(p[j]));
    return out;
}

RealizedVolResult realized_volatility(const ReturnSeries& returns, Aggregation aggregation,
                                      std::size_t min_returns) {
    if (returns.returns.empty()) throw std::invalid_argument("realized volatility of an empty return series");
    if (returns.timestamps.size() != returns.returns.size())
        throw std::invalid_argument("return series: timestamp and return counts differ");

    RealizedVolResult result;
    RVSeries& out = result.series;
    out.aggregation = aggregation;

    auto flush = [&](Timestamp period, double sum_sq, double sum, std::size_t count) {
        if (count >= min_returns) {
            out.periods.push_back(period);
            out.rv.push_back(std::sqrt(sum_sq));
            out.bucket_returns.push_back(sum);
            out.counts.push_back(count);
        } else {
            result.dropped.push_back(period);
        }
    };

    Timestamp current = bucket_start(returns.timestamps.front(), aggregation);
    double sum_sq = 0.0;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < returns.returns.size(); ++j) {
        const Timestamp b = bucket_start(returns.timestamps[j], aggregation);
        if (b < current) throw std::invalid_argument("return timestamps are not increasing");
        if (b != current) {
            flush(current, sum_sq, sum, count);
            current = b;
            sum_sq = sum = 0.0;
            count = 0;
        }
        const double r = returns.returns[j];
        sum_sq += r * r;
        sum += r;
        ++count;
    }
    flush(current, sum_sq, sum, count);
    return result;
}

std::vector<double> aggregate_log_rv(std::span<const double> rv, std::size_t n) {
    if (n == 0) throw std::invalid_argument("horizon length must be at least 1");
    for (std::size_t i = 0; i < rv.size(); ++i) {
        if (!(rv[i] > 0.0))
            throw std::domain_error("rv at index " + std::to_string(i) +
                                    " is not positive; apply the zero floor before taking logs");
    }
    if (rv.size() < n) return {};
    std::vector<double> out;
    out.reserve(rv.size() - n + 1);
    for (std::size_t t = n - 1; t < rv.size(); ++t) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += std::log(rv[t - k]);
        out.push_back(s / static_cast<double>(n));
    }
    return out;
}

double apply_zero_floor(std::span<double> rv, std::size_t train_len) {
    if (std::none_of(rv.begin(), rv.end(), [](double v) { return v == 0.0; })) return 0.0;
    double smallest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < std::min(train_len, rv.size()); ++i)
        if (rv[i] > 0.0) smallest = std::min(smallest, rv[i]);
    if (!std::isfinite(smallest)) throw DataError("zero floor: training partition has no positive rv");
    const double floor = smallest * 1e-3;
    for (double& v : rv)
        if (v == 0.0) v = floor;
    return floor;
}

Partition split(std::size_t length, const SplitSpec& spec, std::size_t lookback) {
    const std::size_t held_out = spec.validation_len + spec.test_len;
    if (length <= held_out + lookback) {
        throw DataError("series of length " + std::to_string(length) + " too short: need at least " +
                        std::to_string(held_out + lookback + 1) + " points (validation " +
                        std::to_string(spec.validation_len) + ", test " + std::to_string(spec.test_len) +
                        ", lookback " + std::to_string(lookback) + ")");
    }
    Partition p;
    p.size = length;
    p.valid_end = length - spec.test_len;
    p.train_end = p.valid_end - spec.validation_len;
    return p;
}

MinMaxScaler MinMaxScaler::fit(std::span<const double> train) {
    if (train.empty()) throw std::invalid_argument("min-max scaler: empty training series");
    const auto [lo, hi] = std::minmax_element(train.begin(), train.end());
    if (!(*hi > *lo)) throw std::invalid_argument("min-max scaler: training series is constant");
    return MinMaxScaler(*lo, *hi);
}

MinMaxScaler MinMaxScaler::from_bounds(double lo, double hi) {
    if (!(hi > lo)) throw std::invalid_argument("min-max scaler: hi must exceed lo");
    return MinMaxScaler(lo, hi);
}

std::vector<double> MinMaxScaler::transform(std::span<const double> x) const {
    std::vector<double> out(x.size());
    std::transform(x.begin(), x.end(), out.begin(), [this](double v) { return transform(v); });
    return out;
}

std::vector<double> MinMaxScaler::invert(std::span<const double> y) const {
    std::vector<double> out(y.size());
    std::transform(y.begin(), y.end(), out.begin(), [this](double v) { return invert(v); });
    return out;
}

}  // namespace volforge
