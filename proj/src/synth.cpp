#include "volforge/synth.hpp"

#include "volforge/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace volforge {

void GbmSpec::validate() const {
    if (!(s0 > 0.0)) throw std::invalid_argument("gbm: s0 must be positive");
    if (!(dt > 0.0)) throw std::invalid_argument("gbm: dt must be positive");
    if (steps_per_bucket < 1 || steps_per_bucket >= 86400)
        throw std::invalid_argument("gbm: steps per bucket must lie in [1, 86399]");
    if (buckets < 1) throw std::invalid_argument("gbm: need at least one bucket");
    if (!sigma_by_bucket.empty() && sigma_by_bucket.size() != buckets)
        throw std::invalid_argument("gbm: sigma table needs one value per bucket");
    for (std::size_t b = 0; b < buckets; ++b)
        if (!(sigma_at(b) >= 0.0)) throw std::invalid_argument("gbm: sigma must be non-negative");
}

GbmPath simulate_gbm(const GbmSpec& spec) {
    spec.validate();
    const std::size_t m = spec.steps_per_bucket;
    const auto spacing = static_cast<Timestamp>(86400 / (m + 1));
    const double sqrt_dt = std::sqrt(spec.dt);

    Rng rng(spec.seed);
    std::vector<Timestamp> times;
    std::vector<double> prices;
    times.reserve(spec.buckets * m + 1);
    prices.reserve(spec.buckets * m + 1);
    std::vector<double> iv(spec.buckets);

    double log_price = std::log(spec.s0);
    times.push_back(spec.start);
    prices.push_back(spec.s0);
    for (std::size_t b = 0; b < spec.buckets; ++b) {
        const double sigma = spec.sigma_at(b);
        const double drift = (spec.mu - 0.5 * sigma * sigma) * spec.dt;
        const Timestamp day = spec.start + static_cast<Timestamp>(b) * 86400;
        for (std::size_t i = 1; i <= m; ++i) {
            log_price += drift + sigma * sqrt_dt * rng.normal();
            times.push_back(day + static_cast<Timestamp>(i) * spacing);
            prices.push_back(std::exp(log_price));
        }
        iv[b] = sigma * sigma * static_cast<double>(m) * spec.dt;
    }
    return {PriceSeries(std::move(times), std::move(prices), spacing), std::move(iv)};
}

void GarchSimSpec::validate() const {
    if (!(omega > 0.0)) throw std::invalid_argument("garch sim: omega must be positive");
    if (!(alpha >= 0.0 && beta >= 0.0 && alpha + gamma >= 0.0))
        throw std::invalid_argument("garch sim: need alpha >= 0, beta >= 0, alpha + gamma >= 0");
    if (!(alpha + beta + 0.5 * gamma < 1.0)) throw std::invalid_argument("garch sim: process is not stationary");
    if (length < 1) throw std::invalid_argument("garch sim: length must be positive");
}

GarchPath simulate_garch(const GarchSimSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    double s2 = spec.omega / (1.0 - spec.alpha - spec.beta - 0.5 * spec.gamma);
    double r_prev = 0.0;
    bool have_prev = false;

    GarchPath path;
    path.returns.returns.reserve(spec.length);
    path.returns.timestamps.reserve(spec.length);
    path.sigma2.reserve(spec.length);
    for (std::size_t t = 0; t < spec.burn_in + spec.length; ++t) {
        if (have_prev) {
            const double arch = spec.alpha + (r_prev < 0.0 ? spec.gamma : 0.0);
            s2 = spec.omega + arch * r_prev * r_prev + spec.beta * s2;
        }
        const double r = std::sqrt(s2) * rng.normal();
        if (t >= spec.burn_in) {
            const auto k = static_cast<Timestamp>(t - spec.burn_in);
            path.returns.timestamps.push_back(spec.start + (k + 1) * 86400 - 1);
            path.returns.returns.push_back(r);
            path.sigma2.push_back(s2);
        }
        r_prev = r;
        have_prev = true;
    }
    return path;
}

std::vector<ConsistencyRow> rv_consistency_probe(const GbmSpec& spec, const std::vector<std::size_t>& frequencies) {
    spec.validate();
    const double bucket_years = spec.dt * static_cast<double>(spec.steps_per_bucket);
    std::vector<ConsistencyRow> rows;
    for (std::size_t m : frequencies) {
        GbmSpec s = spec;
        s.steps_per_bucket = m;
        s.dt = bucket_years / static_cast<double>(m);
        const GbmPath path = simulate_gbm(s);
        const RVSeries rv = realized_volatility(log_returns(path.prices), Aggregation::day).series;
        if (rv.size() != s.buckets) throw std::logic_error("consistency probe: bucket count mismatch");

        ConsistencyRow row;
        row.steps_per_bucket = m;
        double err = 0.0;
        std::size_t informative = 0;
        for (std::size_t b = 0; b < rv.size(); ++b) {
            const double rv2 = rv.rv[b] * rv.rv[b];
            const double iv = path.integrated_variance[b];
            row.mean_rv2 += rv2;
            row.mean_iv += iv;
            if (iv > 0.0) {
                err += std::abs(rv2 - iv) / iv;
                ++informative;
            }
        }
        row.mean_rv2 /= static_cast<double>(rv.size());
        row.mean_iv /= static_cast<double>(rv.size());
        if (informative > 0) row.mean_relative_error = err / static_cast<double>(informative);
        rows.push_back(row);
    }
    return rows;
}

RVSeries simulate_har_rv(const HarSimSpec& spec) {
    if (spec.length < 1) throw std::invalid_argument("har sim: length must be positive");
    if (!(spec.noise_sd >= 0.0)) throw std::invalid_argument("har sim: noise sd must be non-negative");
    const double persistence = spec.beta_d + spec.beta_w + spec.beta_m;
    if (!(persistence < 1.0)) throw std::invalid_argument("har sim: coefficients are not stationary");

    Rng rng(spec.seed);
    const double mean = spec.c / (1.0 - persistence);
    const std::size_t total = spec.burn_in + spec.length;
    std::vector<double> log_rv(total, mean);
    auto avg = [&](std::size_t t, std::size_t n) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += t >= k ? log_rv[t - k] : mean;
        return s / static_cast<double>(n);
    };
    for (std::size_t t = 1; t < total; ++t) {
        log_rv[t] = spec.c + spec.beta_d * avg(t - 1, 1) + spec.beta_w * avg(t - 1, 5) +
                    spec.beta_m * avg(t - 1, 22) + spec.noise_sd * rng.normal();
    }

    RVSeries out;
    out.aggregation = Aggregation::day;
    for (std::size_t t = spec.burn_in; t < total; ++t) {
        const double rv = std::exp(log_rv[t]);
        out.periods.push_back(spec.start + static_cast<Timestamp>(t - spec.burn_in) * 86400);
        out.rv.push_back(rv);
        out.bucket_returns.push_back(rv * rng.normal());
        out.counts.push_back(1);
    }
    return out;
}

}  // namespace volforge
