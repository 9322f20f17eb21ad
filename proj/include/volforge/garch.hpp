#pragma once

#include "volforge/simplex.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace volforge {

enum class GarchFlavor { garch, gjr };

std::string_view to_string(GarchFlavor flavor);

struct GarchParams {
    double omega = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;  // leverage term on negative shocks; 0 for plain GARCH
    double mu = 0.0;

    /// alpha + beta + gamma / 2.
    double persistence() const noexcept { return alpha + beta + 0.5 * gamma; }
};

struct GarchModel {
    GarchParams params;
    GarchFlavor flavor = GarchFlavor::garch;
    double loglik = 0.0;
    /// Variance used to start the recursion (training sample variance).
    double sigma2_init = 0.0;
    /// Returns per rv bucket. Forecasts need it; 1 when the model is fitted
    /// on bucket-level returns.
    std::optional<double> returns_per_bucket;
    std::size_t iterations = 0;

    std::string dump() const;
};

/// sigma^2_t for t = 0..n-1 given sigma^2_0 = `sigma2_init`:
///   sigma^2_t = omega + (alpha + gamma 1[e_{t-1} < 0]) e_{t-1}^2 + beta sigma^2_{t-1},  e = r - mu.
std::vector<double> garch_variances(const GarchParams& params, std::span<const double> returns,
                                    double sigma2_init);

/// One recursion step.
double garch_next_variance(const GarchParams& params, double last_return, double last_sigma2);

/// Gaussian log-likelihood with the recursion started at the sample variance
/// of `returns`. Throws std::domain_error if a variance is not positive.
double garch_loglik(const GarchParams& params, std::span<const double> returns);

/// Two-step fit: mu is the sample mean, then the variance parameters maximise
/// garch_loglik through a simplex over log(omega) and logistic/softmax shares
/// of the persistence, which keeps omega > 0, alpha, beta >= 0,
/// alpha + gamma >= 0 and persistence < 1.
GarchModel garch_fit(std::span<const double> returns, GarchFlavor flavor, const SimplexOptions& options = {});

/// rv forecast for the bucket after `history`:
/// sqrt(sigma^2_{n} * returns_per_bucket), filtering from model.sigma2_init.
double garch_forecast(const GarchModel& model, std::span<const double> history);

/// sqrt(sigma^2_next * returns_per_bucket) from the last return and variance.
double garch_forecast(const GarchModel& model, double last_return, double last_sigma2);

}  // namespace volforge
