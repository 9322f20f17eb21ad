#include "volforge/arima.hpp"

#include "volforge/csv.hpp"
#include "volforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace volforge {

std::string ArimaModel::dump() const {
    std::ostringstream out;
    out << "model=arima\norder=" << order.p << ',' << order.d << ',' << order.q << "\nphi=";
    for (std::size_t i = 0; i < phi.size(); ++i) out << (i ? "," : "") << format_real(phi[i]);
    out << "\ntheta=";
    for (std::size_t i = 0; i < theta.size(); ++i) out << (i ? "," : "") << format_real(theta[i]);
    out << "\nintercept=" << format_real(intercept) << "\ninnovation_variance=" << format_real(innovation_variance)
        << "\nloglik=" << format_real(loglik) << "\naic=" << format_real(aic()) << '\n';
    return out.str();
}

std::vector<double> difference(std::span<const double> y, std::size_t d) {
    std::vector<double> w(y.begin(), y.end());
    for (std::size_t k = 0; k < d; ++k) {
        if (w.size() < 2) return {};
        for (std::size_t i = 0; i + 1 < w.size(); ++i) w[i] = w[i + 1] - w[i];
        w.pop_back();
    }
    return w;
}

std::vector<double> partials_to_coefficients(std::span<const double> raw) {
    const std::size_t k = raw.size();
    std::vector<double> coef(k), prev(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double r = std::tanh(raw[j]);
        prev = coef;
        for (std::size_t i = 0; i < j; ++i) coef[i] = prev[i] - r * prev[j - 1 - i];
        coef[j] = r;
    }
    return coef;
}

std::vector<double> css_residuals(std::span<const double> w, std::span<const double> phi,
                                  std::span<const double> theta, double intercept) {
    const std::size_t p = phi.size();
    const std::size_t q = theta.size();
    std::vector<double> a(w.size(), 0.0);
    for (std::size_t t = p; t < w.size(); ++t) {
        double e = w[t] - intercept;
        for (std::size_t i = 1; i <= p; ++i) e -= phi[i - 1] * (w[t - i] - intercept);
        for (std::size_t j = 1; j <= q && j <= t; ++j) e += theta[j - 1] * a[t - j];
        a[t] = e;
    }
    return a;
}

double css_loglik(std::span<const double> w, std::span<const double> phi, std::span<const double> theta,
                  double intercept, double variance, std::size_t first) {
    if (!(variance > 0.0)) return -std::numeric_limits<double>::infinity();
    const auto a = css_residuals(w, phi, theta, intercept);
    const std::size_t start = std::max(first, phi.size());
    if (start >= a.size()) throw std::invalid_argument("css_loglik: no residuals left after conditioning");
    double ss = 0.0;
    for (std::size_t t = start; t < a.size(); ++t) ss += a[t] * a[t];
    const auto n = static_cast<double>(a.size() - start);
    return -0.5 * (n * std::log(2.0 * std::numbers::pi * variance) + ss / variance);
}

namespace {

struct Unpacked {
    double intercept;
    std::vector<double> phi;
    std::vector<double> theta;
    double variance;
};

class ArimaParams {
public:
    ArimaParams(const ArimaOrder& order, double center, double scale)
        : order_(order), center_(center), scale_(scale) {}

    std::size_t size() const { return (order_.d == 0 ? 1 : 0) + order_.p + order_.q + 1; }

    Unpacked unpack(std::span<const double> x) const {
        std::size_t k = 0;
        Unpacked u;
        u.intercept = order_.d == 0 ? center_ + scale_ * x[k++] : 0.0;
        u.phi = partials_to_coefficients(x.subspan(k, order_.p));
        k += order_.p;
        u.theta = partials_to_coefficients(x.subspan(k, order_.q));
        k += order_.q;
        u.variance = std::exp(x[k]);
        return u;
    }

private:
    ArimaOrder order_;
    double center_;
    double scale_;
};

}  // namespace

ArimaModel arima_fit(std::span<const double> y, const ArimaOrder& order, const SimplexOptions& options,
                     std::size_t condition_on) {
    const std::vector<double> w = difference(y, order.d);
    const std::size_t first = condition_on > order.d ? condition_on - order.d : 0;
    const std::size_t need = 10 * order.parameter_count();
    if (w.size() <= need)
        throw std::invalid_argument("arima_fit: " + std::to_string(w.size()) +
                                    " points after differencing, need more than " + std::to_string(need));

    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    if (!(var > 0.0)) throw DataError("arima_fit: differenced series has zero variance");

    const ArimaParams params(order, mean, std::sqrt(var));
    std::vector<double> start(params.size(), 0.0);
    start.back() = std::log(var);

    auto objective = [&](std::span<const double> x) {
        const Unpacked u = params.unpack(x);
        return -css_loglik(w, u.phi, u.theta, u.intercept, u.variance, first);
    };
    const SimplexResult opt = nelder_mead(objective, start, options);
    if (!opt.converged) {
        std::ostringstream diag;
        diag << "iterations=" << opt.iterations << " diameter=" << opt.diameter << " best_loglik=" << -opt.value;
        throw ConvergenceError("arima_fit(" + std::to_string(order.p) + "," + std::to_string(order.d) + "," +
                                   std::to_string(order.q) + ") did not converge",
                               diag.str());
    }

    const Unpacked u = params.unpack(opt.x);
    ArimaModel model;
    model.order = order;
    model.phi = u.phi;
    model.theta = u.theta;
    model.intercept = u.intercept;
    model.innovation_variance = u.variance;
    model.loglik = -opt.value;
    model.iterations = opt.iterations;
    model.loglik_trace.reserve(opt.trace.size());
    for (double v : opt.trace) model.loglik_trace.push_back(-v);
    return model;
}

double arima_forecast(const ArimaModel& model, std::span<const double> history) {
    const ArimaOrder& order = model.order;
    if (model.phi.size() != order.p || model.theta.size() != order.q)
        throw std::invalid_argument("arima_forecast: coefficient count does not match order");
    if (history.size() < order.p + order.d || history.size() < order.d)
        throw std::invalid_argument("arima_forecast: history shorter than p + d");

    const std::vector<double> w = difference(history, order.d);
    const std::vector<double> a = css_residuals(w, model.phi, model.theta, model.intercept);
    const std::size_t n = w.size();
    double next = model.intercept;
    for (std::size_t i = 1; i <= order.p; ++i) next += model.phi[i - 1] * (w[n - i] - model.intercept);
    for (std::size_t j = 1; j <= order.q && j <= n; ++j) next -= model.theta[j - 1] * a[n - j];

    // Undo the differencing: y_{n+1} = w_{n+1} + sum_k (-1)^{k+1} C(d,k) y_{n+1-k}.
    double binom = 1.0;
    for (std::size_t k = 1; k <= order.d; ++k) {
        binom = binom * static_cast<double>(order.d - k + 1) / static_cast<double>(k);
        const double sign = (k % 2 == 1) ? 1.0 : -1.0;
        next += sign * binom * history[history.size() - k];
    }
    return next;
}

ArimaSelection arima_order_select(std::span<const double> y, std::span<const ArimaOrder> candidates,
                                  const SimplexOptions& options) {
    if (candidates.empty()) throw std::invalid_argument("arima_order_select: no candidate orders");
    std::size_t condition_on = 0;
    for (const ArimaOrder& order : candidates) condition_on = std::max(condition_on, order.p + order.d);
    ArimaSelection selection;
    bool found = false;
    for (const ArimaOrder& order : candidates) {
        try {
            ArimaModel model = arima_fit(y, order, options, condition_on);
            const double aic = model.aic();
            selection.log.push_back({order, aic, {}});
            const ArimaModel& best = selection.model;
            const bool better =
                !found || aic < best.aic() ||
                (aic == best.aic() && (order.parameter_count() < best.order.parameter_count() ||
                                       (order.parameter_count() == best.order.parameter_count() &&
                                        order < best.order)));
            if (better) {
                selection.model = std::move(model);
                found = true;
            }
        } catch (const std::exception& e) {
            selection.log.push_back({order, std::numeric_limits<double>::quiet_NaN(), e.what()});
        }
    }
    if (!found) throw ConvergenceError("arima_order_select: every candidate order failed", "");
    return selection;
}

std::vector<ArimaOrder> default_arima_orders() {
    std::vector<ArimaOrder> orders;
    for (std::size_t d = 0; d <= 1; ++d)
        for (std::size_t p = 0; p <= 3; ++p)
            for (std::size_t q = 0; q <= 3; ++q) orders.push_back({p, d, q});
    return orders;
}

}  // namespace volforge
