#pragma once

#include "volforge/simplex.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace volforge {

struct ArimaOrder {
    std::size_t p = 0;
    std::size_t d = 0;
    std::size_t q = 0;

    std::size_t parameter_count() const noexcept { return p + q + 1; }
    auto operator<=>(const ArimaOrder&) const = default;
};

/// ARIMA(p, d, q) in the sign convention
///   w_t - mu = sum_i phi_i (w_{t-i} - mu) + a_t - sum_j theta_j a_{t-j},
/// where w is the d-times differenced series. mu is fitted only when d = 0.
struct ArimaModel {
    ArimaOrder order;
    std::vector<double> phi;
    std::vector<double> theta;
    double intercept = 0.0;
    double innovation_variance = 0.0;
    double loglik = 0.0;
    std::size_t iterations = 0;
    /// Best log-likelihood after each accepted optimiser iteration.
    std::vector<double> loglik_trace;

    double aic() const noexcept { return 2.0 * static_cast<double>(order.parameter_count()) - 2.0 * loglik; }
    std::string dump() const;
};

/// d-fold differencing.
std::vector<double> difference(std::span<const double> y, std::size_t d);

/// Maps unconstrained reals to the coefficients of a polynomial
/// 1 - c_1 B - ... - c_k B^k with all roots outside the unit circle
/// (tanh to partial autocorrelations, then Durbin-Levinson).
std::vector<double> partials_to_coefficients(std::span<const double> raw);

/// CSS residuals of the differenced series: pre-sample residuals are zero and
/// the first p values are conditioned on.
std::vector<double> css_residuals(std::span<const double> w, std::span<const double> phi,
                                  std::span<const double> theta, double intercept);

/// Gaussian conditional log-likelihood of the differenced series, summed over
/// residuals t >= max(p, first).
double css_loglik(std::span<const double> w, std::span<const double> phi, std::span<const double> theta,
                  double intercept, double variance, std::size_t first = 0);

/// Requires length after differencing > 10 (p + q + 1). Throws
/// ConvergenceError if the simplex does not converge.
///
/// `condition_on` is the number of leading observations of `y` left out of
/// the likelihood (at least p + d). Order selection passes a common value so
/// that every candidate's likelihood covers the same observations.
ArimaModel arima_fit(std::span<const double> y, const ArimaOrder& order, const SimplexOptions& options = {},
                     std::size_t condition_on = 0);

/// One-step-ahead mean forecast on the original scale.
double arima_forecast(const ArimaModel& model, std::span<const double> history);

struct ArimaCandidate {
    ArimaOrder order;
    double aic;  // NaN when the fit failed
    std::string failure;
};

struct ArimaSelection {
    ArimaModel model;
    std::vector<ArimaCandidate> log;
};

/// AIC-minimising order, each candidate conditioned on the first max(p + d)
/// observations. Ties go to fewer parameters, then lexicographic order.
ArimaSelection arima_order_select(std::span<const double> y, std::span<const ArimaOrder> candidates,
                                  const SimplexOptions& options = {});

/// p, q in 0..3 and d in {0, 1}.
std::vector<ArimaOrder> default_arima_orders();

}  // namespace volforge
