#include "volforge/classical.hpp"

#include "volforge/csv.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace volforge {

Metric parse_metric(std::string_view name) {
    if (name == "mse" || name == "MSE") return Metric::mse;
    if (name == "mae" || name == "MAE") return Metric::mae;
    throw std::invalid_argument("unknown metric '" + std::string(name) + "' (expected mse or mae)");
}

std::string_view to_string(Metric metric) { return metric == Metric::mse ? "mse" : "mae"; }

double metric_value(Metric metric, std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size() || actual.empty())
        throw std::invalid_argument("metric_value: sequences must be non-empty and equal length");
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double e = actual[i] - predicted[i];
        s += metric == Metric::mse ? e * e : std::abs(e);
    }
    return s / static_cast<double>(actual.size());
}

double naive_forecast(std::span<const double> history) {
    if (history.empty()) throw std::invalid_argument("naive forecast needs a non-empty history");
    return history.back();
}

// ---------------------------------------------------------------------------
// EWMA

std::string EwmaModel::dump() const {
    return "model=ewma\nalpha=" + format_real(alpha) + "\nsigma2_0=" + format_real(sigma2_0) + "\n";
}

double ewma_step(double sigma2_prev, double r_prev, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("ewma alpha must lie in (0, 1]");
    if (sigma2_prev < 0.0) throw std::invalid_argument("ewma previous variance must be non-negative");
    // Same recursion as alpha*s + (1-alpha)*r^2, written so that r^2 == s
    // leaves s bit-for-bit unchanged.
    return sigma2_prev + (1.0 - alpha) * (r_prev * r_prev - sigma2_prev);
}

double ewma_forecast(const EwmaModel& model, std::span<const double> history) {
    double s = model.sigma2_0;
    for (double r : history) s = ewma_step(s, r, model.alpha);
    return std::sqrt(s);
}

std::vector<double> default_alpha_grid() {
    std::vector<double> grid;
    for (int k = 1; k <= 99; ++k) grid.push_back(k / 100.0);
    return grid;
}

EwmaFit ewma_fit(std::span<const double> series, std::size_t train_len, Metric metric,
                 std::span<const double> alpha_grid) {
    if (alpha_grid.empty()) throw std::invalid_argument("ewma_fit: empty alpha grid");
    for (double a : alpha_grid)
        if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("ewma_fit: grid alpha outside (0, 1]");
    if (train_len == 0) throw std::invalid_argument("ewma_fit: empty training window");
    if (train_len >= series.size()) throw std::invalid_argument("ewma_fit: empty validation window");

    // Running mean: exact when every squared value is identical.
    double sigma2_0 = 0.0;
    for (std::size_t i = 0; i < train_len; ++i)
        sigma2_0 += (series[i] * series[i] - sigma2_0) / static_cast<double>(i + 1);

    const auto actual = series.subspan(train_len);
    std::vector<double> predicted(actual.size());
    EwmaFit fit;
    fit.log.reserve(alpha_grid.size());
    double best = std::numeric_limits<double>::infinity();
    for (double alpha : alpha_grid) {
        double s = sigma2_0;
        for (std::size_t t = 0; t < series.size(); ++t) {
            if (t >= train_len) predicted[t - train_len] = std::sqrt(s);
            s = ewma_step(s, series[t], alpha);
        }
        const double m = metric_value(metric, actual, predicted);
        fit.log.push_back({alpha, m});
        if (m < best || (m == best && alpha < fit.model.alpha)) {
            best = m;
            fit.model = {alpha, sigma2_0};
        }
    }
    if (!std::isfinite(best)) throw std::runtime_error("ewma_fit: no finite candidate metric");
    return fit;
}

// ---------------------------------------------------------------------------
// HAR-RV

std::string HarModel::dump() const {
    std::ostringstream out;
    out << "model=har\nlags=" << lags.d << ',' << lags.w << ',' << lags.m << "\nc=" << format_real(c)
        << "\nbeta_d=" << format_real(beta_d) << "\nbeta_w=" << format_real(beta_w)
        << "\nbeta_m=" << format_real(beta_m) << "\nresidual_variance=" << format_real(residual_variance)
        << "\nbias_correction=" << (bias_correction ? "true" : "false") << '\n';
    return out.str();
}

namespace {

void check_lags(const HarLags& lags) {
    if (!(lags.d >= 1 && lags.d < lags.w && lags.w < lags.m))
        throw std::invalid_argument("HAR lags must satisfy 1 <= d < w < m");
}

std::vector<double> logs_of(std::span<const double> rv) {
    std::vector<double> out(rv.size());
    for (std::size_t i = 0; i < rv.size(); ++i) {
        if (!(rv[i] > 0.0))
            throw std::domain_error("HAR needs positive rv (index " + std::to_string(i) +
                                    "); apply the zero floor first");
        out[i] = std::log(rv[i]);
    }
    return out;
}

double trailing_mean(std::span<const double> x, std::size_t t, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += x[t - k];
    return s / static_cast<double>(n);
}

}  // namespace

std::array<double, 4> har_features(std::span<const double> log_rv, std::size_t t, const HarLags& lags) {
    if (t + 1 < lags.m || t >= log_rv.size()) throw std::out_of_range("har_features: not enough history");
    return {1.0, trailing_mean(log_rv, t, lags.d), trailing_mean(log_rv, t, lags.w),
            trailing_mean(log_rv, t, lags.m)};
}

HarModel har_fit(std::span<const double> train, const HarLags& lags) {
    check_lags(lags);
    const std::vector<double> y_log = logs_of(train);
    const std::size_t n = y_log.size();
    const std::size_t rows = n >= lags.m ? n - lags.m : 0;
    if (rows < 8)
        throw std::invalid_argument("har_fit: " + std::to_string(rows) + " usable rows, need at least 8 (lags m=" +
                                    std::to_string(lags.m) + ", length " + std::to_string(n) + ")");

    Eigen::MatrixXd x(rows, 4);
    Eigen::VectorXd y(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t t = lags.m - 1 + r;
        const auto f = har_features(y_log, t, lags);
        for (int c = 0; c < 4; ++c) x(static_cast<Eigen::Index>(r), c) = f[c];
        y(static_cast<Eigen::Index>(r)) = y_log[t + 1];
    }

    const Eigen::Matrix4d gram = x.transpose() * x;
    const Eigen::Vector4d rhs = x.transpose() * y;
    Eigen::Vector4d beta;

    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(gram);
    const double max_eig = eig.eigenvalues().maxCoeff();
    const double min_eig = eig.eigenvalues().minCoeff();
    if (max_eig > 0.0 && min_eig > 1e-13 * max_eig) {
        const Eigen::LDLT<Eigen::Matrix4d> ldlt(gram);
        beta = ldlt.solve(rhs);
        // One step of iterative refinement on the normal equations.
        beta += ldlt.solve(x.transpose() * (y - x * beta));
    } else {
        beta = x.completeOrthogonalDecomposition().solve(y);
    }

    HarModel model;
    model.lags = lags;
    model.c = beta(0);
    model.beta_d = beta(1);
    model.beta_w = beta(2);
    model.beta_m = beta(3);
    const Eigen::VectorXd resid = y - x * beta;
    model.residual_variance = resid.squaredNorm() / static_cast<double>(rows);
    if (!std::isfinite(model.c) || !std::isfinite(model.beta_d) || !std::isfinite(model.beta_w) ||
        !std::isfinite(model.beta_m))
        throw std::runtime_error("har_fit: non-finite coefficients");
    return model;
}

double har_forecast(const HarModel& model, std::span<const double> history) {
    check_lags(model.lags);
    if (history.size() < model.lags.m)
        throw std::invalid_argument("har_forecast: history shorter than the monthly lag");
    const std::vector<double> tail = logs_of(history.last(model.lags.m));
    const auto f = har_features(tail, tail.size() - 1, model.lags);
    const double log_pred = model.c + model.beta_d * f[1] + model.beta_w * f[2] + model.beta_m * f[3];
    const double correction = model.bias_correction ? 0.5 * model.residual_variance : 0.0;
    return std::exp(log_pred + correction);
}

HarSearch har_lag_search(std::span<const double> series, std::size_t train_len, Metric metric,
                         std::span<const HarLags> grid) {
    if (grid.empty()) throw std::invalid_argument("har_lag_search: empty lag grid");
    if (train_len >= series.size()) throw std::invalid_argument("har_lag_search: empty validation window");
    const auto train = series.first(train_len);
    const auto actual = series.subspan(train_len);
    std::vector<double> predicted(actual.size());

    HarSearch search;
    search.log.reserve(grid.size());
    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (const HarLags& lags : grid) {
        double m = std::numeric_limits<double>::quiet_NaN();
        HarModel model;
        try {
            model = har_fit(train, lags);
            for (std::size_t t = 0; t < actual.size(); ++t)
                predicted[t] = har_forecast(model, series.first(train_len + t));
            m = metric_value(metric, actual, predicted);
        } catch (const std::invalid_argument&) {
            // lags too long for this training window
        }
        search.log.push_back({lags, m});
        if (std::isnan(m)) continue;
        if (!found || m < best || (m == best && lags < search.model.lags)) {
            best = m;
            search.model = model;
            found = true;
        }
    }
    if (!found) throw std::runtime_error("har_lag_search: no candidate could be fitted");
    return search;
}

std::vector<HarLags> default_har_grid() {
    std::vector<HarLags> grid;
    for (std::size_t d = 1; d <= 3; ++d)
        for (std::size_t w = 4; w <= 20; ++w)
            for (std::size_t m = 21; m <= 120; m += 5) grid.push_back({d, w, m});
    return grid;
}

}  // namespace volforge
