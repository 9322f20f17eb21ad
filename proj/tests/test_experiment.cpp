#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "volforge/csv.hpp"
#include "volforge/errors.hpp"
#include "volforge/experiment.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace volforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("volforge_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

ExperimentConfig small_config() {
    return parse_config(R"(
data.source = har
har_sim.length = 700
split.validation = 100
split.test = 100
rnn.units = 5
rnn.epochs = 3
rnn.windows = 2,5
arima.p = 0..1
arima.q = 0..1
har.w = 4..8
har.m = 21..41:10
)");
}

}  // namespace

TEST_CASE("config parsing") {
    const ExperimentConfig c = parse_config(R"(
# comment line
data.source = gbm   # trailing comment
models = naive, har
metric = mae
seed = 42
rnn.windows = 1..5, 10..20:5
ewma.alphas = 0.5, 0.9
har.lags = 2,10,110
refit_per_step = true
)");
    CHECK(c.source == DataSource::gbm);
    CHECK(c.models == std::vector<std::string>{"naive", "har"});
    CHECK(c.metric == Metric::mae);
    CHECK(c.seed == 42);
    CHECK(c.rnn_windows == std::vector<std::size_t>{1, 2, 3, 4, 5, 10, 15, 20});
    CHECK(c.ewma_alphas == std::vector<double>{0.5, 0.9});
    CHECK(c.har_lags == HarLags{2, 10, 110});
    CHECK(c.refit_per_step);
    CHECK_NOTHROW(c.validate());

    const ExperimentConfig d;
    CHECK(d.ewma_alphas.size() == 99);
    CHECK(d.har_grid() == default_har_grid());
    CHECK(d.arima_orders().size() == default_arima_orders().size());
    CHECK(d.rnn_windows.size() == 50);

    auto line_error = [](const std::string& text, const std::string& needle) {
        try {
            parse_config(text);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    line_error("seed = 1\nbogus.key = 3\n", "line 2");
    line_error("seed = 1\nseed = 2\n", "duplicate");
    line_error("seed = -4\n", "seed");
    line_error("metric = rmse\n", "metric");
    line_error("rnn.windows = 9..3\n", "rnn.windows");
    line_error("just text\n", "key = value");
    line_error("rnn.optimizer = adagrad\n", "adagrad");

    ExperimentConfig bad;
    bad.models = {"naive", "naive"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.models = {};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ExperimentConfig{};
    bad.source = DataSource::csv;
    bad.csv_path = "/definitely/not/here.csv";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ExperimentConfig{};
    bad.rnn_windows = {0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ExperimentConfig{};
    bad.rnn_search_budget = 4;
    bad.rnn_grid.units = {7};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("canonical form and hash") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);

    const ExperimentConfig base = small_config();
    CHECK(parse_config(base.canonical()).canonical() == base.canonical());
    CHECK(parse_config(base.canonical()).hash() == base.hash());
    CHECK(base.hash().size() == 16);

    // same meaning, different text
    const ExperimentConfig same = parse_config("har.m = 21, 31, 41\n  data.source=har\nrnn.windows = 2..5:3\n"
                                               "har.w = 4,5,6,7,8\narima.q = 0,1\narima.p = 0..1\n"
                                               "split.test = 100\nsplit.validation = 100\nrnn.epochs = 3\n"
                                               "rnn.units = 5\nhar_sim.length = 700 # same\n");
    CHECK(same.hash() == base.hash());

    ExperimentConfig moved = base;
    moved.output_dir = "/elsewhere";
    CHECK(moved.hash() == base.hash());

    const std::vector<std::string> edits{"seed = 2", "metric = mae", "rnn.epochs = 4", "models = naive",
                                         "split.test = 101", "har_sim.noise_sd = 0.31", "refit_per_step = true",
                                         "ewma.alphas = 0.5", "rnn.learning_rate = 0.002", "data.aggregation = month"};
    std::set<std::string> hashes{base.hash()};
    for (const auto& edit : edits) {
        std::string text = base.canonical();
        const std::string key = edit.substr(0, edit.find(' '));
        const auto at = text.find(key + " = ");
        REQUIRE(at != std::string::npos);
        text.replace(at, text.find('\n', at) - at, edit);
        const std::string h = parse_config(text).hash();
        CAPTURE(edit);
        CHECK(hashes.insert(h).second);
    }
}

TEST_CASE("naive on constant-volatility gbm matches a direct recomputation") {
    ExperimentConfig cfg = parse_config(R"(
data.source = gbm
gbm.buckets = 600
gbm.steps_per_bucket = 39
gbm.dt = 0.00010175010175010175
split.validation = 100
split.test = 100
models = naive
seed = 9
)");
    const ExperimentResult r = run_experiment(cfg);

    GbmSpec spec = cfg.gbm;
    spec.seed = 9;
    const RVSeries rv = realized_volatility(log_returns(simulate_gbm(spec).prices), Aggregation::day).series;
    REQUIRE(rv.size() == 600);
    double mae = 0.0;
    for (std::size_t t = 500; t < 600; ++t) mae += std::abs(rv.rv[t] - rv.rv[t - 1]);
    mae /= 100.0;
    REQUIRE(r.test.rows.size() == 1);
    CHECK(std::abs(r.test.rows[0].metrics.mae - mae) < 1e-15);
    CHECK(r.manifest.partition.train_end == 400);
    // the forecast of every step is the previous observation: no look-ahead
    for (std::size_t i = 0; i < 100; ++i) CHECK(r.test_records[0].predicted[i] == rv.rv[499 + i]);
}

TEST_CASE("full run: reports, determinism, manifest replay") {
    const ExperimentConfig cfg = small_config();
    const ExperimentResult a = run_experiment(cfg);
    const ExperimentResult b = run_experiment(cfg);

    // every enabled model exactly once in each report or in the failure list
    for (const EvalReport* rep : {&a.validation, &a.test}) {
        std::multiset<std::string> seen;
        for (const auto& row : rep->rows) seen.insert(row.model_id);
        for (const auto& f : rep->failures) seen.insert(f.first);
        CHECK(seen.size() == cfg.models.size());
        for (const auto& m : cfg.models) CHECK(seen.count(m) == 1);
        for (const auto& row : rep->rows) {
            CHECK(std::abs(row.metrics.rmse * row.metrics.rmse - row.metrics.mse) <= 1e-12 * row.metrics.mse);
            CHECK(row.metrics.mae <= row.metrics.rmse);
        }
    }
    CHECK(a.test.failures.empty());
    CHECK(a.test.rows.front().model_id == "naive");
    CHECK(a.manifest.reference_model == "naive");

    const fs::path d1 = scratch("run1"), d2 = scratch("run2");
    write_outputs(a, d1);
    write_outputs(b, d2);
    for (const char* f : {"report_test.csv", "report_validation.csv", "report_test.txt", "report_validation.txt",
                          "rv.csv", "plots/har_test.csv", "search/ewma.csv", "weights/lstm.txt"})
        CHECK(slurp(d1 / f) == slurp(d2 / f));
    CHECK(!fs::exists(d1 / "report_test.csv.tmp"));

    // the manifest is itself a config for the same run
    const ExperimentConfig replay = parse_config(slurp(d1 / "manifest.txt"));
    CHECK(replay.hash() == cfg.hash());
    const ExperimentResult c = run_experiment(replay);
    CHECK(report_csv(c.test) == report_csv(a.test));
    CHECK(slurp(d1 / "manifest.txt").find("# config_hash = " + cfg.hash()) != std::string::npos);
}

TEST_CASE("refit policy switch") {
    ExperimentConfig cfg = small_config();
    cfg.models = {"har", "ewma"};
    const ExperimentResult frozen = run_experiment(cfg);
    cfg.refit_per_step = true;
    const ExperimentResult refit = run_experiment(cfg);
    CHECK(report_csv(frozen.validation) == report_csv(refit.validation));
    auto har = [](const ExperimentResult& r) {
        for (const auto& rec : r.test_records)
            if (rec.model_id == "har") return rec.predicted;
        FAIL("har missing");
        return std::vector<double>{};
    };
    CHECK(har(frozen) != har(refit));
    // the first test step sees the same data under both policies
    CHECK(har(frozen)[0] == har(refit)[0]);
}

TEST_CASE("model failures are isolated") {
    ExperimentConfig cfg = small_config();
    cfg.split = {320, 320};
    cfg.rnn.window = 50;  // 60 training points is enough for the classical models only
    cfg.models = {"naive", "har", "lstm"};
    const ExperimentResult r = run_experiment(cfg);
    REQUIRE(r.test.failures.size() == 1);
    CHECK(r.test.failures[0].first == "lstm");
    CHECK(r.test.rows.size() == 2);
    CHECK(r.manifest.models.size() == 3);

    cfg.models = {"lstm", "gru"};
    CHECK_THROWS_AS(run_experiment(cfg), AllModelsFailed);

    cfg.har_sim.length = 100;
    cfg.models = {"naive"};
    CHECK_THROWS_AS(run_experiment(cfg), DataError);
}

TEST_CASE("plot data") {
    ForecastRecord perfect;
    perfect.model_id = "oracle";
    for (int i = 0; i < 5; ++i) {
        perfect.periods.push_back(1577836800 + 86400 * i);
        perfect.actual.push_back(0.01 * (i + 1) + 1.0 / 3.0);
    }
    perfect.predicted = perfect.actual;
    ForecastRecord other = perfect;
    other.model_id = "other";
    other.predicted = {0.1, 0.2, 0.3, 0.4, 0.123456789012345678};

    const fs::path dir = scratch("plots");
    const std::vector<ForecastRecord> recs{perfect, other};
    const auto paths = emit_plot_data(recs, dir, "test", Aggregation::day);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].filename() == "oracle_test.csv");

    const CsvTable t = read_keyed_csv(paths[0]);
    CHECK(t.header == std::vector<std::string>{"period", "actual", "predicted"});
    CHECK(t.keys.size() == 5);
    CHECK(t.keys[0] == "2020-01-01");
    CHECK(t.columns[0] == t.columns[1]);
    const CsvTable u = read_keyed_csv(paths[1]);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(std::abs(u.columns[0][i] - other.actual[i]) <= 1e-12);
        CHECK(std::abs(u.columns[1][i] - other.predicted[i]) <= 1e-12);
    }

    CHECK_THROWS_AS(emit_plot_data(std::span<const ForecastRecord>(), dir, "test", Aggregation::day),
                    std::invalid_argument);
    const fs::path blocker = dir / "file";
    std::ofstream(blocker) << "x";
    try {
        emit_plot_data(recs, blocker / "sub", "test", Aggregation::day);
        FAIL("expected an io error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find((blocker / "sub").string()) != std::string::npos);
    }
}

TEST_CASE("data sources") {
    ExperimentConfig cfg;
    cfg.source = DataSource::garch;
    cfg.garch_sim.length = 800;
    const RVSeries g = load_data(cfg);
    CHECK(g.size() == 800);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.rv[i] == std::abs(g.bucket_returns[i]));

    const fs::path dir = scratch("csv");
    std::vector<Timestamp> ts;
    std::vector<double> px;
    for (int i = 0; i < 48; ++i) {
        ts.push_back(1577836800 + 3600 * i);
        px.push_back(100.0 + (i % 3));
    }
    write_price_csv(dir / "p.csv", PriceSeries(ts, px, 3600));
    cfg.source = DataSource::csv;
    cfg.csv_path = dir / "p.csv";
    CHECK(load_data(cfg).size() == 2);
    cfg.aggregation = Aggregation::hour;
    CHECK(load_data(cfg).size() == 47);
}
