#include "volforge/csv.hpp"
#include "volforge/errors.hpp"
#include "volforge/experiment.hpp"
#include "volforge/rng.hpp"
#include "volforge/rnn.hpp"
#include "volforge/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

using namespace volforge;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, data_error = 3, all_failed = 4 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string models;
    std::string input;
    std::string aggregation = "day";
    std::size_t min_returns = 1;
};

ExperimentConfig resolve(const Options& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.models.empty()) {
        cfg.models.clear();
        std::string item;
        for (char c : o.models + ",") {
            if (c == ',') {
                if (!item.empty()) cfg.models.push_back(item);
                item.clear();
            } else if (c != ' ') {
                item += c;
            }
        }
    }
    return cfg;
}

int cmd_run(const Options& o) {
    const ExperimentConfig cfg = resolve(o);
    const ExperimentResult result = run_experiment(cfg);
    write_outputs(result, cfg.output_dir);
    std::cout << report_text(result.test);
    for (const auto& [id, why] : result.test.failures) std::cerr << "model " << id << " failed: " << why << '\n';
    std::cerr << "config hash " << result.manifest.config_hash << ", outputs in " << cfg.output_dir.string() << '\n';
    return ok;
}

int cmd_ingest(const Options& o) {
    std::filesystem::path input = o.input;
    Aggregation agg = parse_aggregation(o.aggregation);
    std::size_t min_returns = o.min_returns;
    if (input.empty()) {
        if (o.config.empty()) throw ConfigError("ingest needs --input or --config with data.path");
        const ExperimentConfig cfg = load_config(o.config);
        input = cfg.csv_path;
        agg = cfg.aggregation;
        min_returns = cfg.min_returns;
    }
    const PriceSeries prices = read_price_csv(input);
    const RealizedVolResult rv = realized_volatility(log_returns(prices), agg, min_returns);
    const std::filesystem::path dir = o.out.empty() ? std::filesystem::path(".") : std::filesystem::path(o.out);
    std::filesystem::create_directories(dir);
    write_rv_csv(dir / "rv.csv", rv.series);
    std::cerr << rv.series.size() << " " << to_string(agg) << " buckets written to " << (dir / "rv.csv").string();
    if (!rv.dropped.empty()) std::cerr << " (" << rv.dropped.size() << " sparse buckets dropped)";
    std::cerr << '\n';
    return ok;
}

int cmd_simulate(const Options& o) {
    const ExperimentConfig cfg = resolve(o);
    const std::filesystem::path dir = o.out.empty() ? cfg.output_dir : std::filesystem::path(o.out);
    std::filesystem::create_directories(dir);
    switch (cfg.source) {
        case DataSource::gbm: {
            GbmSpec spec = cfg.gbm;
            spec.seed = cfg.seed;
            const GbmPath path = simulate_gbm(spec);
            write_price_csv(dir / "prices.csv", path.prices);
            std::string iv = "bucket,integrated_variance\n";
            for (std::size_t b = 0; b < path.integrated_variance.size(); ++b)
                iv += std::to_string(b) + ',' + format_real(path.integrated_variance[b]) + '\n';
            write_file_atomic(dir / "integrated_variance.csv", iv);
            std::cerr << "gbm prices written to " << (dir / "prices.csv").string() << '\n';
            break;
        }
        case DataSource::garch: {
            GarchSimSpec spec = cfg.garch_sim;
            spec.seed = cfg.seed;
            const GarchPath path = simulate_garch(spec);
            std::vector<Timestamp> ts{path.returns.timestamps.front() - 86400};
            std::vector<double> px{100.0};
            for (std::size_t i = 0; i < path.returns.returns.size(); ++i) {
                ts.push_back(path.returns.timestamps[i]);
                px.push_back(px.back() * std::exp(path.returns.returns[i]));
            }
            write_price_csv(dir / "prices.csv", PriceSeries(std::move(ts), std::move(px), 86400));
            std::cerr << "garch prices written to " << (dir / "prices.csv").string() << '\n';
            break;
        }
        case DataSource::har: {
            HarSimSpec spec = cfg.har_sim;
            spec.seed = cfg.seed;
            const RVSeries rv = simulate_har_rv(spec);
            std::string out = "period,rv,bucket_return\n";
            for (std::size_t i = 0; i < rv.size(); ++i)
                out += rv.label(i) + ',' + format_real(rv.rv[i]) + ',' + format_real(rv.bucket_returns[i]) + '\n';
            write_file_atomic(dir / "rv.csv", out);
            std::cerr << "har-style rv written to " << (dir / "rv.csv").string() << '\n';
            break;
        }
        case DataSource::csv:
            throw ConfigError("simulate needs data.source = gbm, garch or har");
    }
    return ok;
}

int cmd_gradcheck(const Options& o) {
    const ExperimentConfig cfg = resolve(o);
    bool pass = true;
    std::printf("%-5s %-6s %-6s %-6s %10s %-6s %s\n", "cell", "layers", "window", "loss", "params", "ok", "max_rel_error (worst)");
    for (CellType cell : {CellType::lstm, CellType::gru})
        for (std::size_t layers : {1u, 2u})
            for (std::size_t window : {1u, 3u, 10u})
                for (LossKind loss : {LossKind::mse, LossKind::mae, LossKind::huber}) {
                    RnnConfig c = cfg.rnn;
                    c.cell = cell;
                    c.layers = layers;
                    c.window = window;
                    c.loss = loss;
                    c.head = HeadActivation::linear;
                    c.units = 5;
                    Rng rng(cfg.seed);
                    const RnnWeights w = RnnWeights::initialize(c, rng);
                    std::vector<std::vector<double>> inputs(4, std::vector<double>(window));
                    std::vector<double> targets(4);
                    for (std::size_t b = 0; b < 4; ++b) {
                        for (double& v : inputs[b]) v = rng.uniform();
                        targets[b] = rng.uniform();
                    }
                    const GradientCheck g = rnn_gradient_check(c, w, inputs, targets);
                    const bool good = g.max_relative_error < 1e-4;
                    pass = pass && good;
                    std::printf("%-5s %-6zu %-6zu %-6s %10zu %-6s %.3e (%s)\n", std::string(to_string(cell)).c_str(),
                                layers, window, std::string(to_string(loss)).c_str(), g.parameters,
                                good ? "yes" : "NO", g.max_relative_error, g.worst_parameter.c_str());
                }
    return pass ? ok : failure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"volforge: realized-volatility forecasting experiments"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "flat key = value config file");
        sub->add_option("--seed", o.seed, "overrides the config seed");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--models", o.models, "comma-separated model ids");
    };
    CLI::App* run = app.add_subcommand("run", "full experiment");
    common(run);
    CLI::App* ingest = app.add_subcommand("ingest", "prices csv -> rv csv");
    common(ingest);
    ingest->add_option("--input", o.input, "timestamp,price csv");
    ingest->add_option("--aggregation", o.aggregation, "hour, day or month");
    ingest->add_option("--min-returns", o.min_returns, "drop buckets with fewer returns");
    CLI::App* simulate = app.add_subcommand("simulate", "write synthetic data");
    common(simulate);
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "BPTT against finite differences");
    common(gradcheck);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (run->parsed()) return cmd_run(o);
        if (ingest->parsed()) return cmd_ingest(o);
        if (simulate->parsed()) return cmd_simulate(o);
        if (gradcheck->parsed()) return cmd_gradcheck(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const AllModelsFailed& e) {
        std::cerr << e.what() << '\n';
        return all_failed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failure;
    }
    return failure;
}
