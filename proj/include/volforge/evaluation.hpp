#pragma once

#include "volforge/series.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace volforge {

/// Aligned one-step-ahead forecasts of one model over one evaluation window.
struct ForecastRecord {
    std::string model_id;
    std::vector<Timestamp> periods;
    std::vector<double> actual;
    std::vector<double> predicted;
    int horizon = 1;

    /// Length >= 2, equal lengths, all values finite.
    void validate() const;
};

struct PointMetrics {
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    /// Absent when some actual value is zero.
    std::optional<double> mape;
};

PointMetrics point_metrics(const ForecastRecord& record);

/// Mean absolute percentage error (x100). Throws std::domain_error when an
/// actual value is zero.
double mape(std::span<const double> actual, std::span<const double> predicted);

enum class DmLoss { squared, absolute };
enum class Alternative { two_sided, less, greater };

std::string_view to_string(DmLoss loss);
std::string_view to_string(Alternative alternative);

struct DmResult {
    double statistic = 0.0;
    double p_value = 1.0;
    DmLoss loss = DmLoss::squared;
    bool harvey_adjusted = true;
    Alternative alternative = Alternative::two_sided;
};

/// Diebold-Mariano test of d_t = L(e1_t) - L(e2_t) at horizon 1 with the
/// Harvey-Leybourne-Newbold small-sample factor and a Student-t(T-1)
/// reference. `less` means model 1 has lower expected loss.
/// Throws std::invalid_argument when the loss differential has zero variance
/// ("indistinguishable forecasts") or the records are misaligned.
DmResult dm_test(const ForecastRecord& first, const ForecastRecord& second, DmLoss loss,
                 Alternative alternative = Alternative::two_sided);

/// Parametric-normal VaR on unit notional: z_confidence * sigma * sqrt(horizon).
double var_estimate(double sigma, double horizon_periods, double confidence);

struct DmCell {
    std::optional<DmResult> result;
    std::string note;  // "ref", "indistinguishable", or an error message
};

struct ReportRow {
    std::string model_id;
    PointMetrics metrics;
    DmCell dm_squared;
    DmCell dm_absolute;
    double var95 = 0.0;  // 10-period
    double var99 = 0.0;
    bool best_mse = false;
    bool best_mae = false;
};

struct EvalReport {
    std::string window;  // "validation" or "test"
    std::string reference_model;
    std::vector<ReportRow> rows;  // registry order
    std::vector<std::pair<std::string, std::string>> failures;  // model id, reason
};

/// One row per record in input order. DM columns compare each model against
/// `reference_model` (two-sided). VaR uses the last predicted rv of the window.
EvalReport build_report(std::span<const ForecastRecord> records, const std::string& reference_model,
                        std::string window_name);

/// CSV with the scale conventions in the header: MSE x1e5, RMSE and MAE x1e3, MAPE in %.
std::string report_csv(const EvalReport& report);

/// Aligned plain-text table, same content as the CSV.
std::string report_text(const EvalReport& report);

}  // namespace volforge
