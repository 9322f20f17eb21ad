#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace volforge {

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

enum class Aggregation { hour, day, month };

Aggregation parse_aggregation(std::string_view name);
std::string_view to_string(Aggregation aggregation);

/// Start of the calendar bucket (UTC) containing `t`.
Timestamp bucket_start(Timestamp t, Aggregation aggregation);

/// Human-readable bucket label: `2020-03-01T14` (hour), `2020-03-01` (day),
/// `2020-03` (month). Labels sort in the same order as bucket starts.
std::string bucket_label(Timestamp start, Aggregation aggregation);

/// Strictly increasing timestamps with strictly positive prices.
class PriceSeries {
public:
    /// Throws std::invalid_argument on length/ordering problems and
    /// std::domain_error naming the first non-positive or non-finite price.
    PriceSeries(std::vector<Timestamp> timestamps, std::vector<double> prices,
                std::int64_t base_frequency_seconds);

    std::span<const Timestamp> timestamps() const noexcept { return timestamps_; }
    std::span<const double> prices() const noexcept { return prices_; }
    std::int64_t base_frequency() const noexcept { return base_frequency_; }
    std::size_t size() const noexcept { return prices_.size(); }

private:
    std::vector<Timestamp> timestamps_;
    std::vector<double> prices_;
    std::int64_t base_frequency_;
};

/// Log returns; `timestamps[j]` is the end of the interval the return spans.
struct ReturnSeries {
    std::vector<Timestamp> timestamps;
    std::vector<double> returns;
};

struct RVSeries {
    std::vector<Timestamp> periods;  // bucket starts, strictly increasing
    std::vector<double> rv;
    /// Sum of the log returns in each bucket (the bucket-level return).
    std::vector<double> bucket_returns;
    /// Number of returns that contributed to each bucket.
    std::vector<std::size_t> counts;
    Aggregation aggregation = Aggregation::day;

    std::size_t size() const noexcept { return rv.size(); }
    std::string label(std::size_t i) const { return bucket_label(periods[i], aggregation); }
};

struct RealizedVolResult {
    RVSeries series;
    /// Buckets discarded for having fewer than `min_returns` observations.
    std::vector<Timestamp> dropped;
};

ReturnSeries log_returns(const PriceSeries& prices);

/// Each return is assigned to the bucket containing its end timestamp.
RealizedVolResult realized_volatility(const ReturnSeries& returns, Aggregation aggregation,
                                      std::size_t min_returns = 1);

/// Trailing n-period mean of log rv. Element k corresponds to period k + n - 1.
std::vector<double> aggregate_log_rv(std::span<const double> rv, std::size_t n);

/// Replaces zero rv with (smallest positive rv among the first `train_len`
/// values) * 1e-3. Returns the floor that was used, or 0 if no zero was found.
double apply_zero_floor(std::span<double> rv, std::size_t train_len);

struct SplitSpec {
    std::size_t validation_len = 252;
    std::size_t test_len = 252;
};

/// Index boundaries of a chronological train/validation/test partition:
/// train [0, train_end), validation [train_end, valid_end), test [valid_end, size).
struct Partition {
    std::size_t train_end = 0;
    std::size_t valid_end = 0;
    std::size_t size = 0;

    std::size_t train_len() const noexcept { return train_end; }
    std::size_t validation_len() const noexcept { return valid_end - train_end; }
    std::size_t test_len() const noexcept { return size - valid_end; }

    template <class T>
    std::span<const T> train(std::span<const T> x) const { return x.first(train_end); }
    template <class T>
    std::span<const T> validation(std::span<const T> x) const {
        return x.subspan(train_end, valid_end - train_end);
    }
    template <class T>
    std::span<const T> test(std::span<const T> x) const { return x.subspan(valid_end); }
};

/// Throws DataError when the training part would not exceed `lookback`.
Partition split(std::size_t length, const SplitSpec& spec, std::size_t lookback = 1);

class MinMaxScaler {
public:
    /// Learns bounds from `train`. Throws std::invalid_argument on an empty
    /// or constant series.
    static MinMaxScaler fit(std::span<const double> train);
    static MinMaxScaler from_bounds(double lo, double hi);

    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }

    double transform(double x) const noexcept { return (x - lo_) / (hi_ - lo_); }
    double invert(double y) const noexcept { return lo_ + y * (hi_ - lo_); }
    std::vector<double> transform(std::span<const double> x) const;
    std::vector<double> invert(std::span<const double> y) const;

private:
    MinMaxScaler(double lo, double hi) : lo_(lo), hi_(hi) {}
    double lo_;
    double hi_;
};

}  // namespace volforge
