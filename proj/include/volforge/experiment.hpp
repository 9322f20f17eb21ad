#pragma once

#include "volforge/arima.hpp"
#include "volforge/classical.hpp"
#include "volforge/evaluation.hpp"
#include "volforge/rnn.hpp"
#include "volforge/series.hpp"
#include "volforge/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace volforge {

/// Every enabled model failed; the run produced no report.
class AllModelsFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model ids in report order.
const std::vector<std::string>& model_registry();

enum class DataSource { csv, gbm, garch, har };

DataSource parse_source(std::string_view name);
std::string_view to_string(DataSource source);

struct ExperimentConfig {
    DataSource source = DataSource::har;
    std::filesystem::path csv_path;
    Aggregation aggregation = Aggregation::day;
    std::size_t min_returns = 1;

    GbmSpec gbm;
    GarchSimSpec garch_sim;
    HarSimSpec har_sim;

    SplitSpec split;
    std::vector<std::string> models{"naive", "ewma", "har", "har_opt", "arima", "garch", "gjr",
                                    "lstm", "lstm_window", "gru", "gru_window"};
    Metric metric = Metric::mse;
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "volforge_out";
    /// Refit classical models at every test step instead of once.
    bool refit_per_step = false;
    /// DM reference; empty means naive when enabled, otherwise the first model.
    std::string reference_model;

    std::vector<double> ewma_alphas = default_alpha_grid();
    HarLags har_lags;
    std::vector<std::size_t> har_d{1, 2, 3};
    std::vector<std::size_t> har_w;
    std::vector<std::size_t> har_m;
    std::vector<std::size_t> arima_p{0, 1, 2, 3};
    std::vector<std::size_t> arima_d{0, 1};
    std::vector<std::size_t> arima_q{0, 1, 2, 3};

    /// Base network; its cell field is overridden per model and its seed by `seed`.
    RnnConfig rnn;
    std::vector<std::size_t> rnn_windows = default_window_grid();
    /// > 0 runs a hyperparameter search over `rnn_grid` for lstm and gru.
    std::size_t rnn_search_budget = 0;
    RnnGrid rnn_grid;

    ExperimentConfig();

    /// Throws ConfigError.
    void validate() const;
    std::vector<HarLags> har_grid() const;
    std::vector<ArimaOrder> arima_orders() const;
    /// Every field in fixed order as `key = value` lines; parses back to an
    /// equal config.
    std::string canonical() const;
    /// FNV-1a (64-bit, hex) of the canonical text without the output directory.
    std::string hash() const;
};

/// Flat `key = value` lines with dotted prefixes; `#` starts a comment.
/// Lists are comma separated; integer lists accept `lo..hi` and `lo..hi:step`.
/// Throws ConfigError naming the line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);

struct ModelEntry {
    std::string model_id;
    std::string parameters;  // one line, selected values
    double seconds = 0.0;
    std::string failure;
};

struct RunManifest {
    std::string config_hash;
    std::string canonical_config;
    std::string versions;
    std::size_t series_length = 0;
    Partition partition;
    double zero_floor = 0.0;
    std::string reference_model;
    std::vector<ModelEntry> models;

    /// Comment lines followed by the canonical config, so the manifest can be
    /// passed back as a config.
    std::string text() const;
};

struct ExperimentResult {
    RVSeries data;
    std::vector<ForecastRecord> validation_records;
    std::vector<ForecastRecord> test_records;
    EvalReport validation;
    EvalReport test;
    RunManifest manifest;
    /// Search tables and weight dumps, file name -> content.
    std::vector<std::pair<std::string, std::string>> artifacts;
};

/// Loads or simulates the rv series described by the config.
RVSeries load_data(const ExperimentConfig& config);

/// Fits every enabled model, forecasts validation and test windows one step
/// at a time, and assembles both reports. A failing model lands in the
/// failure lists; DataError aborts.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// One `period,actual,predicted` CSV per record in `dir`, named
/// `<model>_<suffix>.csv`. Returns the paths written.
std::vector<std::filesystem::path> emit_plot_data(std::span<const ForecastRecord> records,
                                                  const std::filesystem::path& dir, const std::string& suffix,
                                                  Aggregation aggregation);

/// Writes reports, plot data, search logs and the manifest under
/// config.output_dir, each file atomically.
void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace volforge
