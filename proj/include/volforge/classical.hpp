#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace volforge {

enum class Metric { mse, mae };

Metric parse_metric(std::string_view name);
std::string_view to_string(Metric metric);

/// Mean squared or mean absolute error between two equal-length sequences.
double metric_value(Metric metric, std::span<const double> actual, std::span<const double> predicted);

double naive_forecast(std::span<const double> history);

// ---------------------------------------------------------------------------
// EWMA

struct EwmaModel {
    double alpha = 0.94;
    double sigma2_0 = 0.0;

    std::string dump() const;
};

/// alpha * sigma2_prev + (1 - alpha) * r_prev^2.
double ewma_step(double sigma2_prev, double r_prev, double alpha);

/// Runs the recursion over `history` starting from sigma2_0 and returns the
/// next-period rv forecast sqrt(sigma2_n).
double ewma_forecast(const EwmaModel& model, std::span<const double> history);

struct EwmaCandidate {
    double alpha;
    double metric;
};

struct EwmaFit {
    EwmaModel model;
    std::vector<EwmaCandidate> log;  // in grid order
};

/// Chooses alpha by the validation metric of rolling one-step forecasts over
/// `series[train_len:]`, the recursion starting at the beginning of `series`.
/// sigma2_0 is the mean squared rv of the first `train_len` values.
/// Ties go to the smaller alpha.
EwmaFit ewma_fit(std::span<const double> series, std::size_t train_len, Metric metric,
                 std::span<const double> alpha_grid);

/// 0.01, 0.02, ..., 0.99.
std::vector<double> default_alpha_grid();

// ---------------------------------------------------------------------------
// HAR-RV

struct HarLags {
    std::size_t d = 1;
    std::size_t w = 5;
    std::size_t m = 22;

    auto operator<=>(const HarLags&) const = default;
};

struct HarModel {
    HarLags lags;
    double c = 0.0;
    double beta_d = 0.0;
    double beta_w = 0.0;
    double beta_m = 0.0;
    double residual_variance = 0.0;
    /// Multiply forecasts by exp(residual_variance / 2). Off by default.
    bool bias_correction = false;

    std::string dump() const;
};

/// Regressor row [1, logRV^(d)_t, logRV^(w)_t, logRV^(m)_t] for the period `t`.
std::array<double, 4> har_features(std::span<const double> log_rv, std::size_t t, const HarLags& lags);

/// OLS of log rv_{t+1} on the HAR regressors. Uses the normal equations and
/// falls back to the pseudo-inverse when they are rank deficient.
/// Requires strictly positive rv and at least 8 usable rows.
HarModel har_fit(std::span<const double> train, const HarLags& lags);

double har_forecast(const HarModel& model, std::span<const double> history);

struct HarCandidate {
    HarLags lags;
    double metric;
};

struct HarSearch {
    HarModel model;
    std::vector<HarCandidate> log;  // in grid order
};

/// Fits each candidate on series[0:train_len] and scores rolling forecasts on
/// the remainder. Ties go to the lexicographically smallest (d, w, m).
HarSearch har_lag_search(std::span<const double> series, std::size_t train_len, Metric metric,
                         std::span<const HarLags> grid);

/// d in {1,2,3}, w in {4..20}, m in {21, 26, ..., 116}.
std::vector<HarLags> default_har_grid();

}  // namespace volforge
