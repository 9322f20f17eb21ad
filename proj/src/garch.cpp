#include "volforge/garch.hpp"

#include "volforge/csv.hpp"
#include "volforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace volforge {

std::string_view to_string(GarchFlavor flavor) { return flavor == GarchFlavor::garch ? "garch" : "gjr"; }

std::string GarchModel::dump() const {
    std::ostringstream out;
    out << "model=" << to_string(flavor) << "\nomega=" << format_real(params.omega)
        << "\nalpha=" << format_real(params.alpha) << "\nbeta=" << format_real(params.beta)
        << "\ngamma=" << format_real(params.gamma) << "\nmu=" << format_real(params.mu)
        << "\nloglik=" << format_real(loglik) << "\nsigma2_init=" << format_real(sigma2_init) << '\n';
    if (returns_per_bucket) out << "returns_per_bucket=" << format_real(*returns_per_bucket) << '\n';
    return out.str();
}

double garch_next_variance(const GarchParams& params, double last_return, double last_sigma2) {
    const double e = last_return - params.mu;
    const double arch = params.alpha + (e < 0.0 ? params.gamma : 0.0);
    return params.omega + arch * e * e + params.beta * last_sigma2;
}

std::vector<double> garch_variances(const GarchParams& params, std::span<const double> returns,
                                    double sigma2_init) {
    std::vector<double> s(returns.size());
    if (returns.empty()) return s;
    s[0] = sigma2_init;
    for (std::size_t t = 1; t < returns.size(); ++t) s[t] = garch_next_variance(params, returns[t - 1], s[t - 1]);
    return s;
}

namespace {

double sample_variance(std::span<const double> r) {
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    double v = 0.0;
    for (double x : r) v += (x - mean) * (x - mean);
    return v / static_cast<double>(r.size());
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// Shape coordinates live in [-bound, bound]; past it the objective gets a
// quadratic penalty so boundary optima (alpha = 0, say) stay finite.
constexpr double bound = 30.0;

double clamp_shape(double v) { return std::clamp(v, -bound, bound); }

double box_penalty(std::span<const double> x) {
    double pen = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) {
        const double excess = std::abs(x[i]) - bound;
        if (excess > 0.0) pen += excess * excess;
    }
    return pen;
}

// Unconstrained vector -> parameters. GARCH: [log omega, persistence, alpha share].
// GJR: [log omega, persistence, log-weights of alpha and alpha+gamma against beta].
GarchParams unpack(std::span<const double> x, GarchFlavor flavor, double mu) {
    GarchParams p;
    p.mu = mu;
    p.omega = std::exp(x[0]);
    const double persistence = logistic(clamp_shape(x[1]));
    if (flavor == GarchFlavor::garch) {
        const double share = logistic(clamp_shape(x[2]));
        p.alpha = persistence * share;
        p.beta = persistence * (1.0 - share);
    } else {
        const double x2 = clamp_shape(x[2]), x3 = clamp_shape(x[3]);
        const double m = std::max({x2, x3, 0.0});
        const double w1 = std::exp(x2 - m), w2 = std::exp(x3 - m), w3 = std::exp(-m);
        const double total = w1 + w2 + w3;
        p.alpha = 2.0 * persistence * w1 / total;
        const double alpha_negative = 2.0 * persistence * w2 / total;
        p.beta = persistence * w3 / total;
        p.gamma = alpha_negative - p.alpha;
    }
    return p;
}

std::vector<double> pack(const GarchParams& p, GarchFlavor flavor) {
    const double persistence = p.persistence();
    if (flavor == GarchFlavor::garch) return {std::log(p.omega), logit(persistence), logit(p.alpha / persistence)};
    const double alpha_negative = p.alpha + p.gamma;
    // weights relative to beta's, which is pinned at log-weight 0
    return {std::log(p.omega), logit(persistence), std::log(p.alpha / (2.0 * p.beta)),
            std::log(alpha_negative / (2.0 * p.beta))};
}

}  // namespace

double garch_loglik(const GarchParams& params, std::span<const double> returns) {
    if (returns.size() < 2) throw std::invalid_argument("garch_loglik needs at least 2 returns");
    const std::vector<double> s = garch_variances(params, returns, sample_variance(returns));
    double ll = 0.0;
    for (std::size_t t = 0; t < returns.size(); ++t) {
        if (!(s[t] > 0.0) || !std::isfinite(s[t]))
            throw std::domain_error("garch variance not positive at t=" + std::to_string(t));
        const double e = returns[t] - params.mu;
        ll += std::log(2.0 * std::numbers::pi * s[t]) + e * e / s[t];
    }
    return -0.5 * ll;
}

GarchModel garch_fit(std::span<const double> returns, GarchFlavor flavor, const SimplexOptions& options) {
    if (returns.size() < 30) throw std::invalid_argument("garch_fit needs at least 30 returns");
    const double mu = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
    const double var = sample_variance(returns);
    const auto [lo, hi] = std::minmax_element(returns.begin(), returns.end());
    if (*lo == *hi || !(var > 0.0)) throw DataError("garch_fit: returns have zero variance");

    auto objective = [&](std::span<const double> x) {
        try {
            return -garch_loglik(unpack(x, flavor, mu), returns) + box_penalty(x);
        } catch (const std::domain_error&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    // Near alpha = 0 the beta direction is almost flat, so the diameter test
    // alone can stall; a tiny objective spread also counts as converged.
    SimplexOptions tuned = options;
    if (tuned.value_tol == 0.0) tuned.value_tol = 1e-13;

    // Symmetric starts at low and high persistence; GJR also starts from the
    // plain GARCH optimum so it never ends below the model it nests. The best
    // optimum wins and ties keep the earlier start.
    std::vector<GarchParams> starts;
    for (double beta : {0.05, 0.9}) {
        GarchParams start;
        start.alpha = 0.05;
        start.beta = beta;
        start.omega = var * (1.0 - start.persistence());
        starts.push_back(start);
    }
    if (flavor == GarchFlavor::gjr) {
        GarchParams nested = garch_fit(returns, GarchFlavor::garch, options).params;
        nested.alpha = std::max(nested.alpha, 1e-6);
        nested.beta = std::max(nested.beta, 1e-6);
        starts.push_back(nested);
    }

    std::optional<SimplexResult> opt;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        SimplexResult run = nelder_mead(objective, pack(starts[k], flavor), tuned);
        if (!run.converged) {
            std::ostringstream diag;
            diag << "start=" << k << " iterations=" << run.iterations << " diameter=" << run.diameter
                 << " best_loglik=" << -run.value;
            throw ConvergenceError("garch_fit(" + std::string(to_string(flavor)) + ") did not converge", diag.str());
        }
        if (!opt || run.value < opt->value) opt = std::move(run);
    }

    GarchModel model;
    model.flavor = flavor;
    model.params = unpack(opt->x, flavor, mu);
    model.loglik = -opt->value;
    model.sigma2_init = var;
    model.iterations = opt->iterations;
    return model;
}

double garch_forecast(const GarchModel& model, double last_return, double last_sigma2) {
    if (!model.returns_per_bucket) throw std::invalid_argument("garch_forecast: returns per bucket (M) not set");
    if (!(last_sigma2 > 0.0)) throw std::invalid_argument("garch_forecast: last variance must be positive");
    return std::sqrt(garch_next_variance(model.params, last_return, last_sigma2) * *model.returns_per_bucket);
}

double garch_forecast(const GarchModel& model, std::span<const double> history) {
    if (!model.returns_per_bucket) throw std::invalid_argument("garch_forecast: returns per bucket (M) not set");
    if (history.empty()) return std::sqrt(model.sigma2_init * *model.returns_per_bucket);
    const std::vector<double> s = garch_variances(model.params, history, model.sigma2_init);
    return garch_forecast(model, history.back(), s.back());
}

}  // namespace volforge
