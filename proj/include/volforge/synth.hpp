#pragma once

#include "volforge/series.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace volforge {

/// Geometric Brownian motion sampled `steps_per_bucket` times per daily bucket.
struct GbmSpec {
    double s0 = 100.0;
    double mu = 0.05;      // drift per year
    double sigma = 0.2;    // volatility per sqrt(year)
    /// Optional piecewise-constant volatility, one value per bucket; overrides `sigma`.
    std::vector<double> sigma_by_bucket;
    double dt = 1.0 / (252.0 * 390.0);  // years per step
    std::size_t steps_per_bucket = 390;
    std::size_t buckets = 252;
    std::uint64_t seed = 1;
    /// Calendar start of the first bucket (UTC midnight).
    Timestamp start = 1577836800;  // 2020-01-01

    void validate() const;
    double sigma_at(std::size_t bucket) const { return sigma_by_bucket.empty() ? sigma : sigma_by_bucket[bucket]; }
};

struct GbmPath {
    PriceSeries prices;
    /// Integrated variance of each bucket: sum of sigma^2 dt over its steps.
    std::vector<double> integrated_variance;
};

/// Exact log-step sampling:
///   log S_{k+1} = log S_k + (mu - sigma^2/2) dt + sigma sqrt(dt) z_k.
/// Price 0 sits at midnight of the first day; the M prices that close the
/// returns of bucket b are spread evenly inside calendar day b, so daily
/// aggregation puts exactly M returns in every bucket.
GbmPath simulate_gbm(const GbmSpec& spec);

struct GarchSimSpec {
    double omega = 1e-5;
    double alpha = 0.1;
    double beta = 0.85;
    double gamma = 0.0;
    std::size_t length = 1000;
    std::size_t burn_in = 500;
    std::uint64_t seed = 1;
    Timestamp start = 1577836800;

    void validate() const;
};

struct GarchPath {
    ReturnSeries returns;        // one return per calendar day
    std::vector<double> sigma2;  // conditional variance of each return
};

/// r_t = sigma_t eps_t with eps ~ N(0,1) and
/// sigma_t^2 = omega + (alpha + gamma 1[r_{t-1} < 0]) r_{t-1}^2 + beta sigma_{t-1}^2,
/// started at the unconditional variance; the burn-in is discarded.
GarchPath simulate_garch(const GarchSimSpec& spec);

struct ConsistencyRow {
    std::size_t steps_per_bucket = 0;
    /// Mean over buckets of |RV^2 - IV| / IV; empty when IV is zero.
    std::optional<double> mean_relative_error;
    double mean_rv2 = 0.0;
    double mean_iv = 0.0;
};

/// For each M, re-simulates the same buckets (same bucket length and seed)
/// with M steps per bucket and compares RV^2 to IV.
std::vector<ConsistencyRow> rv_consistency_probe(const GbmSpec& spec, const std::vector<std::size_t>& frequencies);

/// Log-RV process with HAR dynamics plus Gaussian innovations, and matching
/// bucket returns r_t = rv_t z_t. Used for model-ranking experiments.
struct HarSimSpec {
    double c = -0.46;
    double beta_d = 0.4;
    double beta_w = 0.3;
    double beta_m = 0.2;
    double noise_sd = 0.3;
    std::size_t length = 3000;
    std::size_t burn_in = 500;
    std::uint64_t seed = 1;
    Timestamp start = 1577836800;
};

RVSeries simulate_har_rv(const HarSimSpec& spec);

}  // namespace volforge
