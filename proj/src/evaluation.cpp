#include "volforge/evaluation.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace volforge {

void ForecastRecord::validate() const {
    if (actual.size() != predicted.size()) throw std::invalid_argument(model_id + ": actual/predicted length mismatch");
    if (!periods.empty() && periods.size() != actual.size())
        throw std::invalid_argument(model_id + ": period/value length mismatch");
    if (actual.size() < 2) throw std::invalid_argument(model_id + ": need at least 2 forecasts");
    for (std::size_t i = 0; i < actual.size(); ++i)
        if (!std::isfinite(actual[i]) || !std::isfinite(predicted[i]))
            throw std::invalid_argument(model_id + ": non-finite value at position " + std::to_string(i));
}

double mape(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size() || actual.empty())
        throw std::invalid_argument("mape: sequences must be non-empty and equal length");
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] == 0.0) throw std::domain_error("mape undefined: actual value at " + std::to_string(i) + " is 0");
        s += std::abs(actual[i] - predicted[i]) / std::abs(actual[i]);
    }
    return 100.0 * s / static_cast<double>(actual.size());
}

PointMetrics point_metrics(const ForecastRecord& record) {
    record.validate();
    PointMetrics m;
    const auto n = static_cast<double>(record.actual.size());
    for (std::size_t i = 0; i < record.actual.size(); ++i) {
        const double e = record.actual[i] - record.predicted[i];
        m.mse += e * e;
        m.mae += std::abs(e);
    }
    m.mse /= n;
    m.mae /= n;
    m.rmse = std::sqrt(m.mse);
    if (std::none_of(record.actual.begin(), record.actual.end(), [](double v) { return v == 0.0; }))
        m.mape = mape(record.actual, record.predicted);
    return m;
}

std::string_view to_string(DmLoss loss) { return loss == DmLoss::squared ? "squared" : "absolute"; }

std::string_view to_string(Alternative alternative) {
    switch (alternative) {
        case Alternative::two_sided: return "two_sided";
        case Alternative::less: return "less";
        case Alternative::greater: return "greater";
    }
    return "?";
}

DmResult dm_test(const ForecastRecord& first, const ForecastRecord& second, DmLoss loss, Alternative alternative) {
    first.validate();
    second.validate();
    if (first.actual.size() != second.actual.size())
        throw std::invalid_argument("dm_test: records have different lengths");
    if (first.actual != second.actual) throw std::invalid_argument("dm_test: records cover different targets");
    const std::size_t n = first.actual.size();
    if (n < 10) throw std::invalid_argument("dm_test: need at least 10 aligned forecasts");
    if (first.horizon != 1 || second.horizon != 1) throw std::invalid_argument("dm_test: only horizon 1 is supported");

    auto loss_of = [loss](double e) { return loss == DmLoss::squared ? e * e : std::abs(e); };
    std::vector<double> d(n);
    double mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        d[t] = loss_of(first.actual[t] - first.predicted[t]) - loss_of(second.actual[t] - second.predicted[t]);
        mean += d[t];
    }
    const auto T = static_cast<double>(n);
    mean /= T;
    double gamma0 = 0.0;
    for (double v : d) gamma0 += (v - mean) * (v - mean);
    gamma0 /= T;
    if (!(gamma0 > 0.0)) throw std::invalid_argument("dm_test: indistinguishable forecasts (zero loss-differential variance)");

    const double h = 1.0;
    const double dm = mean / std::sqrt(gamma0 / T);
    const double harvey = std::sqrt((T + 1.0 - 2.0 * h + h * (h - 1.0) / T) / T);

    DmResult result;
    result.statistic = harvey * dm;
    result.loss = loss;
    result.harvey_adjusted = true;
    result.alternative = alternative;
    const boost::math::students_t dist(T - 1.0);
    switch (alternative) {
        case Alternative::two_sided:
            result.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.statistic)));
            break;
        case Alternative::less: result.p_value = boost::math::cdf(dist, result.statistic); break;
        case Alternative::greater:
            result.p_value = boost::math::cdf(boost::math::complement(dist, result.statistic));
            break;
    }
    result.p_value = std::clamp(result.p_value, 0.0, 1.0);
    return result;
}

double var_estimate(double sigma, double horizon_periods, double confidence) {
    if (!(confidence > 0.5 && confidence < 1.0)) throw std::invalid_argument("VaR confidence must lie in (0.5, 1)");
    if (!(sigma >= 0.0)) throw std::invalid_argument("VaR sigma must be non-negative");
    if (!(horizon_periods > 0.0)) throw std::invalid_argument("VaR horizon must be positive");
    const double z = boost::math::quantile(boost::math::normal(), confidence);
    return z * sigma * std::sqrt(horizon_periods);
}

EvalReport build_report(std::span<const ForecastRecord> records, const std::string& reference_model,
                        std::string window_name) {
    if (records.empty()) throw std::invalid_argument("build_report: no records");
    for (const ForecastRecord& r : records) {
        r.validate();
        if (r.actual != records.front().actual || r.periods != records.front().periods)
            throw std::invalid_argument("build_report: " + r.model_id + " covers a different evaluation window");
    }
    const auto ref = std::find_if(records.begin(), records.end(),
                                  [&](const ForecastRecord& r) { return r.model_id == reference_model; });
    if (ref == records.end()) throw std::invalid_argument("build_report: reference model '" + reference_model + "' missing");

    EvalReport report;
    report.window = std::move(window_name);
    report.reference_model = reference_model;
    for (const ForecastRecord& r : records) {
        ReportRow row;
        row.model_id = r.model_id;
        row.metrics = point_metrics(r);
        auto dm_cell = [&](DmLoss loss) {
            DmCell cell;
            if (&r == &*ref) {
                cell.note = "ref";
                return cell;
            }
            try {
                cell.result = dm_test(r, *ref, loss);
            } catch (const std::invalid_argument& e) {
                cell.note = std::string(e.what()).find("indistinguishable") != std::string::npos ? "indistinguishable"
                                                                                                  : e.what();
            }
            return cell;
        };
        row.dm_squared = dm_cell(DmLoss::squared);
        row.dm_absolute = dm_cell(DmLoss::absolute);
        const double sigma = std::max(r.predicted.back(), 0.0);
        row.var95 = var_estimate(sigma, 10.0, 0.95);
        row.var99 = var_estimate(sigma, 10.0, 0.99);
        report.rows.push_back(std::move(row));
    }
    const auto best_mse = std::min_element(report.rows.begin(), report.rows.end(),
                                           [](const ReportRow& a, const ReportRow& b) { return a.metrics.mse < b.metrics.mse; });
    const auto best_mae = std::min_element(report.rows.begin(), report.rows.end(),
                                           [](const ReportRow& a, const ReportRow& b) { return a.metrics.mae < b.metrics.mae; });
    best_mse->best_mse = true;
    best_mae->best_mae = true;
    return report;
}

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::vector<std::string> header_cells() {
    return {"model",         "mse_e-05",       "rmse_e-03",     "mae_e-03",     "mape_pct",
            "dm_sq_stat",    "dm_sq_p",        "dm_abs_stat",   "dm_abs_p",     "var10_95",
            "var10_99",      "best"};
}

std::vector<std::string> row_cells(const ReportRow& row) {
    auto dm = [](const DmCell& c, bool stat) -> std::string {
        if (!c.result) return c.note.empty() ? "NA" : c.note;
        return fixed(stat ? c.result->statistic : c.result->p_value, 4);
    };
    std::string best;
    if (row.best_mse) best += "mse";
    if (row.best_mae) best += best.empty() ? "mae" : "+mae";
    return {row.model_id,
            fixed(row.metrics.mse * 1e5, 4),
            fixed(row.metrics.rmse * 1e3, 4),
            fixed(row.metrics.mae * 1e3, 4),
            row.metrics.mape ? fixed(*row.metrics.mape, 4) : "NA",
            dm(row.dm_squared, true),
            dm(row.dm_squared, false),
            dm(row.dm_absolute, true),
            dm(row.dm_absolute, false),
            fixed(row.var95, 6),
            fixed(row.var99, 6),
            best.empty() ? "-" : best};
}

}  // namespace

std::string report_csv(const EvalReport& report) {
    std::ostringstream out;
    const auto header = header_cells();
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const ReportRow& row : report.rows) {
        const auto cells = row_cells(row);
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    }
    for (const auto& [model, reason] : report.failures) {
        std::string quoted;
        for (char c : reason) quoted += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
        out << model << ",FAILED,\"" << quoted << "\"\n";
    }
    return out.str();
}

std::string report_text(const EvalReport& report) {
    std::vector<std::vector<std::string>> table{header_cells()};
    for (const ReportRow& row : report.rows) table.push_back(row_cells(row));
    std::vector<std::size_t> width(table.front().size(), 0);
    for (const auto& r : table)
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());

    std::ostringstream out;
    out << "# " << report.window << " window, one-step-ahead, " << (table.size() - 1) << " models, DM reference: "
        << report.reference_model << '\n';
    out << "# scales: MSE x1e5, RMSE x1e3, MAE x1e3, MAPE %, VaR 10-period on unit notional\n";
    for (const auto& r : table) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            out << r[i];
            if (i + 1 < r.size()) out << std::string(width[i] - r[i].size() + 2, ' ');
        }
        out << '\n';
    }
    for (const auto& [model, reason] : report.failures) out << "FAILED " << model << ": " << reason << '\n';
    return out.str();
}

}  // namespace volforge
