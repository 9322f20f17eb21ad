#include "volforge/experiment.hpp"

#include "volforge/csv.hpp"
#include "volforge/errors.hpp"
#include "volforge/garch.hpp"
#include "volforge/parallel.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

namespace volforge {

namespace {

constexpr const char* volforge_version = "0.1.0";

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view value) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        const auto comma = value.find(',', start);
        const auto end = comma == std::string_view::npos ? value.size() : comma;
        const std::string item = trim(value.substr(start, end - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::uint64_t to_uint(const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    return v;
}

double to_real(const std::string& s) {
    const auto v = parse_real(s);
    if (!v) throw std::invalid_argument("expected a number, got '" + s + "'");
    return *v;
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::vector<std::size_t> to_uint_list(const std::string& value) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(value)) {
        const auto dots = item.find("..");
        if (dots == std::string::npos) {
            out.push_back(to_uint(item));
            continue;
        }
        const std::string rest = item.substr(dots + 2);
        const auto colon = rest.find(':');
        const std::uint64_t lo = to_uint(trim(item.substr(0, dots)));
        const std::uint64_t hi = to_uint(trim(rest.substr(0, colon)));
        const std::uint64_t step = colon == std::string::npos ? 1 : to_uint(trim(rest.substr(colon + 1)));
        if (step == 0 || hi < lo) throw std::invalid_argument("bad range '" + item + "'");
        for (std::uint64_t v = lo; v <= hi; v += step) out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

std::vector<double> to_real_list(const std::string& value) {
    std::vector<double> out;
    for (const auto& item : split_list(value)) out.push_back(to_real(item));
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

template <class T, class F>
std::vector<T> to_enum_list(const std::string& value, F parse) {
    std::vector<T> out;
    for (const auto& item : split_list(value)) out.push_back(parse(item));
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

template <class T, class F>
std::string join(const std::vector<T>& values, F format) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format(values[i]);
    }
    return out;
}

std::string join_uint(const std::vector<std::size_t>& v) {
    return join(v, [](std::size_t x) { return std::to_string(x); });
}
std::string join_real(const std::vector<double>& v) {
    return join(v, [](double x) { return format_real(x); });
}
template <class E>
std::string join_enum(const std::vector<E>& v) {
    return join(v, [](E x) { return std::string(to_string(x)); });
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        t["data.source"] = [](ExperimentConfig& c, const std::string& v) { c.source = parse_source(v); };
        t["data.path"] = [](ExperimentConfig& c, const std::string& v) { c.csv_path = v; };
        t["data.aggregation"] = [](ExperimentConfig& c, const std::string& v) { c.aggregation = parse_aggregation(v); };
        t["data.min_returns"] = [](ExperimentConfig& c, const std::string& v) { c.min_returns = to_uint(v); };
        t["gbm.s0"] = [](ExperimentConfig& c, const std::string& v) { c.gbm.s0 = to_real(v); };
        t["gbm.mu"] = [](ExperimentConfig& c, const std::string& v) { c.gbm.mu = to_real(v); };
        t["gbm.sigma"] = [](ExperimentConfig& c, const std::string& v) { c.gbm.sigma = to_real(v); };
        t["gbm.dt"] = [](ExperimentConfig& c, const std::string& v) { c.gbm.dt = to_real(v); };
        t["gbm.steps_per_bucket"] = [](ExperimentConfig& c, const std::string& v) { c.gbm.steps_per_bucket = to_uint(v); };
        t["gbm.buckets"] = [](ExperimentConfig& c, const std::string& v) { c.gbm.buckets = to_uint(v); };
        t["garch_sim.omega"] = [](ExperimentConfig& c, const std::string& v) { c.garch_sim.omega = to_real(v); };
        t["garch_sim.alpha"] = [](ExperimentConfig& c, const std::string& v) { c.garch_sim.alpha = to_real(v); };
        t["garch_sim.beta"] = [](ExperimentConfig& c, const std::string& v) { c.garch_sim.beta = to_real(v); };
        t["garch_sim.gamma"] = [](ExperimentConfig& c, const std::string& v) { c.garch_sim.gamma = to_real(v); };
        t["garch_sim.length"] = [](ExperimentConfig& c, const std::string& v) { c.garch_sim.length = to_uint(v); };
        t["garch_sim.burn_in"] = [](ExperimentConfig& c, const std::string& v) { c.garch_sim.burn_in = to_uint(v); };
        t["har_sim.c"] = [](ExperimentConfig& c, const std::string& v) { c.har_sim.c = to_real(v); };
        t["har_sim.beta_d"] = [](ExperimentConfig& c, const std::string& v) { c.har_sim.beta_d = to_real(v); };
        t["har_sim.beta_w"] = [](ExperimentConfig& c, const std::string& v) { c.har_sim.beta_w = to_real(v); };
        t["har_sim.beta_m"] = [](ExperimentConfig& c, const std::string& v) { c.har_sim.beta_m = to_real(v); };
        t["har_sim.noise_sd"] = [](ExperimentConfig& c, const std::string& v) { c.har_sim.noise_sd = to_real(v); };
        t["har_sim.length"] = [](ExperimentConfig& c, const std::string& v) { c.har_sim.length = to_uint(v); };
        t["har_sim.burn_in"] = [](ExperimentConfig& c, const std::string& v) { c.har_sim.burn_in = to_uint(v); };
        t["split.validation"] = [](ExperimentConfig& c, const std::string& v) { c.split.validation_len = to_uint(v); };
        t["split.test"] = [](ExperimentConfig& c, const std::string& v) { c.split.test_len = to_uint(v); };
        t["models"] = [](ExperimentConfig& c, const std::string& v) { c.models = split_list(v); };
        t["metric"] = [](ExperimentConfig& c, const std::string& v) { c.metric = parse_metric(v); };
        t["seed"] = [](ExperimentConfig& c, const std::string& v) { c.seed = to_uint(v); };
        t["output.dir"] = [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; };
        t["refit_per_step"] = [](ExperimentConfig& c, const std::string& v) { c.refit_per_step = to_bool(v); };
        t["report.reference"] = [](ExperimentConfig& c, const std::string& v) { c.reference_model = v; };
        t["ewma.alphas"] = [](ExperimentConfig& c, const std::string& v) { c.ewma_alphas = to_real_list(v); };
        t["har.lags"] = [](ExperimentConfig& c, const std::string& v) {
            const auto l = to_uint_list(v);
            if (l.size() != 3) throw std::invalid_argument("har.lags needs three values d,w,m");
            c.har_lags = {l[0], l[1], l[2]};
        };
        t["har.d"] = [](ExperimentConfig& c, const std::string& v) { c.har_d = to_uint_list(v); };
        t["har.w"] = [](ExperimentConfig& c, const std::string& v) { c.har_w = to_uint_list(v); };
        t["har.m"] = [](ExperimentConfig& c, const std::string& v) { c.har_m = to_uint_list(v); };
        t["arima.p"] = [](ExperimentConfig& c, const std::string& v) { c.arima_p = to_uint_list(v); };
        t["arima.d"] = [](ExperimentConfig& c, const std::string& v) { c.arima_d = to_uint_list(v); };
        t["arima.q"] = [](ExperimentConfig& c, const std::string& v) { c.arima_q = to_uint_list(v); };
        t["rnn.window"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.window = to_uint(v); };
        t["rnn.layers"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.layers = to_uint(v); };
        t["rnn.units"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.units = to_uint(v); };
        t["rnn.dropout"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.dropout = to_real(v); };
        t["rnn.activation"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.head = parse_head(v); };
        t["rnn.loss"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.loss = parse_loss(v); };
        t["rnn.epochs"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.epochs = to_uint(v); };
        t["rnn.batch_size"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.batch_size = to_uint(v); };
        t["rnn.optimizer"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.optimizer = parse_optimizer(v); };
        t["rnn.learning_rate"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.learning_rate = to_real(v); };
        t["rnn.gru_bias"] = [](ExperimentConfig& c, const std::string& v) { c.rnn.gru_bias = to_bool(v); };
        t["rnn.windows"] = [](ExperimentConfig& c, const std::string& v) { c.rnn_windows = to_uint_list(v); };
        t["rnn.search_budget"] = [](ExperimentConfig& c, const std::string& v) { c.rnn_search_budget = to_uint(v); };
        t["rnn.grid.windows"] = [](ExperimentConfig& c, const std::string& v) { c.rnn_grid.windows = to_uint_list(v); };
        t["rnn.grid.layers"] = [](ExperimentConfig& c, const std::string& v) { c.rnn_grid.layers = to_uint_list(v); };
        t["rnn.grid.units"] = [](ExperimentConfig& c, const std::string& v) { c.rnn_grid.units = to_uint_list(v); };
        t["rnn.grid.dropouts"] = [](ExperimentConfig& c, const std::string& v) { c.rnn_grid.dropouts = to_real_list(v); };
        t["rnn.grid.activations"] = [](ExperimentConfig& c, const std::string& v) {
            c.rnn_grid.heads = to_enum_list<HeadActivation>(v, parse_head);
        };
        t["rnn.grid.losses"] = [](ExperimentConfig& c, const std::string& v) {
            c.rnn_grid.losses = to_enum_list<LossKind>(v, parse_loss);
        };
        t["rnn.grid.epochs"] = [](ExperimentConfig& c, const std::string& v) { c.rnn_grid.epochs = to_uint_list(v); };
        t["rnn.grid.batch_sizes"] = [](ExperimentConfig& c, const std::string& v) {
            c.rnn_grid.batch_sizes = to_uint_list(v);
        };
        t["rnn.grid.optimizers"] = [](ExperimentConfig& c, const std::string& v) {
            c.rnn_grid.optimizers = to_enum_list<OptimizerKind>(v, parse_optimizer);
        };
        t["rnn.grid.learning_rates"] = [](ExperimentConfig& c, const std::string& v) {
            c.rnn_grid.learning_rates = to_real_list(v);
        };
        return t;
    }();
    return table;
}

}  // namespace

const std::vector<std::string>& model_registry() {
    static const std::vector<std::string> ids{"naive", "ewma", "har", "har_opt", "arima", "garch",
                                              "gjr", "lstm", "lstm_window", "gru", "gru_window"};
    return ids;
}

DataSource parse_source(std::string_view name) {
    if (name == "csv") return DataSource::csv;
    if (name == "gbm") return DataSource::gbm;
    if (name == "garch") return DataSource::garch;
    if (name == "har") return DataSource::har;
    throw ConfigError("unknown data source '" + std::string(name) + "' (expected csv, gbm, garch or har)");
}

std::string_view to_string(DataSource source) {
    switch (source) {
        case DataSource::csv: return "csv";
        case DataSource::gbm: return "gbm";
        case DataSource::garch: return "garch";
        case DataSource::har: return "har";
    }
    return "?";
}

ExperimentConfig::ExperimentConfig() {
    for (std::size_t w = 4; w <= 20; ++w) har_w.push_back(w);
    for (std::size_t m = 21; m <= 116; m += 5) har_m.push_back(m);
    gbm.buckets = 1000;
    gbm.steps_per_bucket = 78;
    gbm.dt = 1.0 / (252.0 * 78.0);
    garch_sim.length = 2000;
}

std::vector<HarLags> ExperimentConfig::har_grid() const {
    std::vector<HarLags> grid;
    for (std::size_t d : har_d)
        for (std::size_t w : har_w)
            for (std::size_t m : har_m)
                if (d < w && w < m) grid.push_back({d, w, m});
    return grid;
}

std::vector<ArimaOrder> ExperimentConfig::arima_orders() const {
    std::vector<ArimaOrder> orders;
    for (std::size_t p : arima_p)
        for (std::size_t d : arima_d)
            for (std::size_t q : arima_q) orders.push_back({p, d, q});
    return orders;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (models.empty()) fail("no models enabled");
    std::set<std::string> seen;
    for (const auto& m : models) {
        if (std::find(model_registry().begin(), model_registry().end(), m) == model_registry().end())
            fail("unknown model '" + m + "'");
        if (!seen.insert(m).second) fail("model '" + m + "' listed twice");
    }
    if (!reference_model.empty() && !seen.count(reference_model))
        fail("report.reference '" + reference_model + "' is not an enabled model");
    if (source == DataSource::csv) {
        if (csv_path.empty()) fail("data.path is required for data.source = csv");
        if (!std::filesystem::exists(csv_path)) fail("data.path '" + csv_path.string() + "' does not exist");
    }
    try {
        if (source == DataSource::gbm) gbm.validate();
        if (source == DataSource::garch) garch_sim.validate();
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    if (min_returns == 0) fail("data.min_returns must be at least 1");
    if (split.validation_len < 2 || split.test_len < 2) fail("validation and test windows need at least 2 points");
    if (ewma_alphas.empty()) fail("ewma.alphas is empty");
    for (double a : ewma_alphas)
        if (!(a > 0.0 && a <= 1.0)) fail("ewma alpha " + format_real(a) + " outside (0, 1]");
    if (!(har_lags.d >= 1 && har_lags.d < har_lags.w && har_lags.w < har_lags.m)) fail("har.lags must satisfy 1 <= d < w < m");
    if (har_grid().empty()) fail("har lag grid is empty");
    if (arima_p.empty() || arima_d.empty() || arima_q.empty()) fail("arima order lists must be non-empty");
    for (std::size_t d : arima_d)
        if (d > 2) fail("arima.d must be 0, 1 or 2");
    for (std::size_t p : arima_p)
        if (p > 5) fail("arima.p must be at most 5");
    for (std::size_t q : arima_q)
        if (q > 5) fail("arima.q must be at most 5");
    rnn.validate();
    if (rnn_windows.empty()) fail("rnn.windows is empty");
    for (std::size_t w : rnn_windows) {
        RnnConfig probe = rnn;
        probe.window = w;
        probe.validate();
    }
    if (rnn_search_budget > 0) {
        // every grid value must be a legal config on its own
        RnnConfig probe = rnn;
        auto each = [&](const auto& values, auto assign) {
            if (values.empty()) fail("an rnn.grid list is empty");
            for (const auto& v : values) {
                RnnConfig c = probe;
                assign(c, v);
                c.validate();
            }
        };
        each(rnn_grid.windows, [](RnnConfig& c, std::size_t v) { c.window = v; });
        each(rnn_grid.layers, [](RnnConfig& c, std::size_t v) { c.layers = v; });
        each(rnn_grid.units, [](RnnConfig& c, std::size_t v) { c.units = v; });
        each(rnn_grid.dropouts, [](RnnConfig& c, double v) { c.dropout = v; });
        each(rnn_grid.epochs, [](RnnConfig& c, std::size_t v) { c.epochs = v; });
        each(rnn_grid.batch_sizes, [](RnnConfig& c, std::size_t v) { c.batch_size = v; });
        each(rnn_grid.learning_rates, [](RnnConfig& c, double v) { c.learning_rate = v; });
        if (rnn_grid.heads.empty() || rnn_grid.losses.empty() || rnn_grid.optimizers.empty())
            fail("an rnn.grid list is empty");
    }
}

std::string ExperimentConfig::canonical() const {
    std::ostringstream o;
    o << "data.source = " << to_string(source) << '\n'
      << "data.path = " << csv_path.string() << '\n'
      << "data.aggregation = " << to_string(aggregation) << '\n'
      << "data.min_returns = " << min_returns << '\n'
      << "gbm.s0 = " << format_real(gbm.s0) << '\n'
      << "gbm.mu = " << format_real(gbm.mu) << '\n'
      << "gbm.sigma = " << format_real(gbm.sigma) << '\n'
      << "gbm.dt = " << format_real(gbm.dt) << '\n'
      << "gbm.steps_per_bucket = " << gbm.steps_per_bucket << '\n'
      << "gbm.buckets = " << gbm.buckets << '\n'
      << "garch_sim.omega = " << format_real(garch_sim.omega) << '\n'
      << "garch_sim.alpha = " << format_real(garch_sim.alpha) << '\n'
      << "garch_sim.beta = " << format_real(garch_sim.beta) << '\n'
      << "garch_sim.gamma = " << format_real(garch_sim.gamma) << '\n'
      << "garch_sim.length = " << garch_sim.length << '\n'
      << "garch_sim.burn_in = " << garch_sim.burn_in << '\n'
      << "har_sim.c = " << format_real(har_sim.c) << '\n'
      << "har_sim.beta_d = " << format_real(har_sim.beta_d) << '\n'
      << "har_sim.beta_w = " << format_real(har_sim.beta_w) << '\n'
      << "har_sim.beta_m = " << format_real(har_sim.beta_m) << '\n'
      << "har_sim.noise_sd = " << format_real(har_sim.noise_sd) << '\n'
      << "har_sim.length = " << har_sim.length << '\n'
      << "har_sim.burn_in = " << har_sim.burn_in << '\n'
      << "split.validation = " << split.validation_len << '\n'
      << "split.test = " << split.test_len << '\n'
      << "models = " << join(models, [](const std::string& s) { return s; }) << '\n'
      << "metric = " << to_string(metric) << '\n'
      << "seed = " << seed << '\n'
      << "output.dir = " << output_dir.string() << '\n'
      << "refit_per_step = " << (refit_per_step ? "true" : "false") << '\n'
      << "report.reference = " << reference_model << '\n'
      << "ewma.alphas = " << join_real(ewma_alphas) << '\n'
      << "har.lags = " << har_lags.d << ',' << har_lags.w << ',' << har_lags.m << '\n'
      << "har.d = " << join_uint(har_d) << '\n'
      << "har.w = " << join_uint(har_w) << '\n'
      << "har.m = " << join_uint(har_m) << '\n'
      << "arima.p = " << join_uint(arima_p) << '\n'
      << "arima.d = " << join_uint(arima_d) << '\n'
      << "arima.q = " << join_uint(arima_q) << '\n'
      << "rnn.window = " << rnn.window << '\n'
      << "rnn.layers = " << rnn.layers << '\n'
      << "rnn.units = " << rnn.units << '\n'
      << "rnn.dropout = " << format_real(rnn.dropout) << '\n'
      << "rnn.activation = " << to_string(rnn.head) << '\n'
      << "rnn.loss = " << to_string(rnn.loss) << '\n'
      << "rnn.epochs = " << rnn.epochs << '\n'
      << "rnn.batch_size = " << rnn.batch_size << '\n'
      << "rnn.optimizer = " << to_string(rnn.optimizer) << '\n'
      << "rnn.learning_rate = " << format_real(rnn.learning_rate) << '\n'
      << "rnn.gru_bias = " << (rnn.gru_bias ? "true" : "false") << '\n'
      << "rnn.windows = " << join_uint(rnn_windows) << '\n'
      << "rnn.search_budget = " << rnn_search_budget << '\n'
      << "rnn.grid.windows = " << join_uint(rnn_grid.windows) << '\n'
      << "rnn.grid.layers = " << join_uint(rnn_grid.layers) << '\n'
      << "rnn.grid.units = " << join_uint(rnn_grid.units) << '\n'
      << "rnn.grid.dropouts = " << join_real(rnn_grid.dropouts) << '\n'
      << "rnn.grid.activations = " << join_enum(rnn_grid.heads) << '\n'
      << "rnn.grid.losses = " << join_enum(rnn_grid.losses) << '\n'
      << "rnn.grid.epochs = " << join_uint(rnn_grid.epochs) << '\n'
      << "rnn.grid.batch_sizes = " << join_uint(rnn_grid.batch_sizes) << '\n'
      << "rnn.grid.optimizers = " << join_enum(rnn_grid.optimizers) << '\n'
      << "rnn.grid.learning_rates = " << join_real(rnn_grid.learning_rates) << '\n';
    return o.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string ExperimentConfig::hash() const {
    std::string text;
    std::istringstream in(canonical());
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("output.dir", 0) != 0) text += line + '\n';
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig config;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash_pos = line.find('#');
        const std::string body = trim(std::string_view(line).substr(0, hash_pos));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        const auto where = "config line " + std::to_string(line_no) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
        try {
            it->second(config, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + key + ": " + e.what());
        } catch (const std::exception& e) {
            throw ConfigError(where + key + ": " + e.what());
        }
    }
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string RunManifest::text() const {
    std::ostringstream o;
    o << "# volforge run manifest\n"
      << "# config_hash = " << config_hash << '\n'
      << "# versions = " << versions << '\n'
      << "# series_length = " << series_length << '\n'
      << "# partition = train [0, " << partition.train_end << "), validation [" << partition.train_end << ", "
      << partition.valid_end << "), test [" << partition.valid_end << ", " << partition.size << ")\n"
      << "# zero_floor = " << format_real(zero_floor) << '\n'
      << "# reference_model = " << reference_model << '\n';
    for (const auto& m : models) {
        char secs[32];
        std::snprintf(secs, sizeof secs, "%.3f", m.seconds);
        o << "# model " << m.model_id << " (" << secs << " s): "
          << (m.failure.empty() ? m.parameters : "FAILED " + m.failure) << '\n';
    }
    o << canonical_config;
    return o.str();
}

// ---------------------------------------------------------------------------
// data

RVSeries load_data(const ExperimentConfig& config) {
    switch (config.source) {
        case DataSource::csv: {
            const PriceSeries prices = read_price_csv(config.csv_path);
            return realized_volatility(log_returns(prices), config.aggregation, config.min_returns).series;
        }
        case DataSource::gbm: {
            GbmSpec spec = config.gbm;
            spec.seed = config.seed;
            const GbmPath path = simulate_gbm(spec);
            return realized_volatility(log_returns(path.prices), config.aggregation, config.min_returns).series;
        }
        case DataSource::garch: {
            GarchSimSpec spec = config.garch_sim;
            spec.seed = config.seed;
            const GarchPath path = simulate_garch(spec);
            return realized_volatility(path.returns, config.aggregation, config.min_returns).series;
        }
        case DataSource::har: {
            HarSimSpec spec = config.har_sim;
            spec.seed = config.seed;
            return simulate_har_rv(spec);
        }
    }
    throw ConfigError("unknown data source");
}

// ---------------------------------------------------------------------------
// models

namespace {

/// What a forecaster may see at step t: everything strictly before t.
struct History {
    std::span<const double> rv;
    std::span<const double> returns;
    std::size_t t = 0;
};

using Forecaster = std::function<double(const History&)>;

/// Rolling one-step forecasts over [begin, end). The target of step t is read
/// only after the forecast for t has been recorded.
ForecastRecord roll(const std::string& id, const RVSeries& data, std::size_t begin, std::size_t end,
                    const Forecaster& forecast) {
    ForecastRecord rec;
    rec.model_id = id;
    const std::span<const double> rv(data.rv);
    const std::span<const double> ret(data.bucket_returns);
    for (std::size_t t = begin; t < end; ++t) {
        if (t == 0 || !(data.periods[t - 1] < data.periods[t]))
            throw std::logic_error("leakage check: forecast for period " + std::to_string(t) +
                                   " would not precede its target");
        const History h{rv.first(t), ret.first(std::min(t, ret.size())), t};
        const double f = forecast(h);
        if (!std::isfinite(f)) throw std::runtime_error("non-finite forecast at period " + data.label(t));
        rec.predicted.push_back(f);
        rec.periods.push_back(data.periods[t]);
        rec.actual.push_back(data.rv[t]);
    }
    return rec;
}

std::string one_line(std::string text) {
    while (!text.empty() && text.back() == '\n') text.pop_back();
    std::replace(text.begin(), text.end(), '\n', ' ');
    return text;
}

struct ModelRun {
    ForecastRecord validation;
    ForecastRecord test;
    std::string parameters;
    std::vector<std::pair<std::string, std::string>> artifacts;
};

double mean_square(std::span<const double> x) {
    double m = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) m += (x[k] * x[k] - m) / static_cast<double>(k + 1);
    return m;
}

std::string ewma_log_csv(const EwmaFit& fit) {
    std::string out = "alpha,metric_value\n";
    for (const auto& c : fit.log) out += format_real(c.alpha) + ',' + format_real(c.metric) + '\n';
    return out;
}

std::string har_log_csv(const HarSearch& s) {
    std::string out = "d,w,m,metric_value\n";
    for (const auto& c : s.log)
        out += std::to_string(c.lags.d) + ',' + std::to_string(c.lags.w) + ',' + std::to_string(c.lags.m) + ',' +
               format_real(c.metric) + '\n';
    return out;
}

std::string arima_log_csv(const ArimaSelection& s) {
    std::string out = "p,d,q,aic\n";
    for (const auto& c : s.log)
        out += std::to_string(c.order.p) + ',' + std::to_string(c.order.d) + ',' + std::to_string(c.order.q) + ',' +
               (std::isnan(c.aic) ? std::string("NA") : format_real(c.aic)) + '\n';
    return out;
}

ModelRun run_model(const std::string& id, const ExperimentConfig& cfg, const RVSeries& data, const Partition& part) {
    const std::span<const double> rv(data.rv);
    const std::span<const double> ret(data.bucket_returns);
    const std::size_t tr = part.train_end, ve = part.valid_end, n = part.size;
    const bool per_step = cfg.refit_per_step;
    ModelRun run;

    if (id == "naive") {
        const Forecaster f = [](const History& h) { return naive_forecast(h.rv); };
        run.validation = roll(id, data, tr, ve, f);
        run.test = roll(id, data, ve, n, f);
        run.parameters = "model=naive";
    } else if (id == "ewma") {
        const EwmaFit fit = ewma_fit(rv.first(ve), tr, cfg.metric, cfg.ewma_alphas);
        run.validation = roll(id, data, tr, ve, [&](const History& h) { return ewma_forecast(fit.model, h.rv); });
        EwmaModel frozen = fit.model;
        frozen.sigma2_0 = mean_square(rv.first(ve));
        run.test = roll(id, data, ve, n, [&](const History& h) {
            if (!per_step) return ewma_forecast(frozen, h.rv);
            EwmaModel m = frozen;
            m.sigma2_0 = mean_square(h.rv);
            return ewma_forecast(m, h.rv);
        });
        run.parameters = one_line(frozen.dump());
        run.artifacts.emplace_back("search/ewma.csv", ewma_log_csv(fit));
    } else if (id == "har" || id == "har_opt") {
        HarLags lags = cfg.har_lags;
        HarModel fitted;
        if (id == "har_opt") {
            const auto grid = cfg.har_grid();
            const HarSearch s = har_lag_search(rv.first(ve), tr, cfg.metric, grid);
            lags = s.model.lags;
            fitted = s.model;
            run.artifacts.emplace_back("search/har_opt.csv", har_log_csv(s));
        } else {
            fitted = har_fit(rv.first(tr), lags);
        }
        run.validation = roll(id, data, tr, ve, [&](const History& h) { return har_forecast(fitted, h.rv); });
        const HarModel frozen = har_fit(rv.first(ve), lags);
        run.test = roll(id, data, ve, n, [&](const History& h) {
            return har_forecast(per_step ? har_fit(h.rv, lags) : frozen, h.rv);
        });
        run.parameters = one_line(frozen.dump());
    } else if (id == "arima") {
        const auto orders = cfg.arima_orders();
        const ArimaSelection sel = arima_order_select(rv.first(tr), orders);
        run.validation = roll(id, data, tr, ve, [&](const History& h) { return arima_forecast(sel.model, h.rv); });
        const ArimaModel frozen = arima_fit(rv.first(ve), sel.model.order);
        run.test = roll(id, data, ve, n, [&](const History& h) {
            return arima_forecast(per_step ? arima_fit(h.rv, sel.model.order) : frozen, h.rv);
        });
        run.parameters = one_line(frozen.dump());
        run.artifacts.emplace_back("search/arima.csv", arima_log_csv(sel));
    } else if (id == "garch" || id == "gjr") {
        if (ret.size() != rv.size()) throw DataError("garch needs bucket returns for every rv period");
        const GarchFlavor flavor = id == "gjr" ? GarchFlavor::gjr : GarchFlavor::garch;
        auto fit = [&](std::span<const double> r) {
            GarchModel m = garch_fit(r, flavor);
            m.returns_per_bucket = 1.0;
            return m;
        };
        const GarchModel selected = fit(ret.first(tr));
        run.validation = roll(id, data, tr, ve, [&](const History& h) { return garch_forecast(selected, h.returns); });
        const GarchModel frozen = fit(ret.first(ve));
        run.test = roll(id, data, ve, n, [&](const History& h) {
            return garch_forecast(per_step ? fit(h.returns) : frozen, h.returns);
        });
        run.parameters = one_line(frozen.dump());
    } else if (id == "lstm" || id == "gru" || id == "lstm_window" || id == "gru_window") {
        RnnConfig base = cfg.rnn;
        base.cell = id.rfind("gru", 0) == 0 ? CellType::gru : CellType::lstm;
        base.seed = cfg.seed;
        TrainedRnn model;
        if (id.find("_window") != std::string::npos) {
            WindowSearch s = window_search(rv.first(ve), tr, base, cfg.rnn_windows, cfg.metric);
            run.artifacts.emplace_back("search/" + id + ".csv", window_log_csv(s));
            model = std::move(s.model);
        } else if (cfg.rnn_search_budget > 0) {
            RnnGrid grid = cfg.rnn_grid;
            grid.cells = {base.cell};
            const auto cands = grid_candidates(grid, base, cfg.rnn_search_budget, cfg.seed);
            HyperSearch s = hyperparameter_search(rv.first(ve), tr, cands, cfg.metric, cfg.rnn_search_budget, cfg.seed);
            run.artifacts.emplace_back("search/" + id + ".csv", search_log_csv(s));
            model = std::move(s.model);
        } else {
            model = rnn_train(rv.first(tr), base);
        }
        const Forecaster f = [&](const History& h) { return model.predict(h.rv); };
        run.validation = roll(id, data, tr, ve, f);
        run.test = roll(id, data, ve, n, f);
        run.parameters = "config=" + model.config.describe() + " scaler=[" + format_real(model.scaler.lo()) + ", " +
                         format_real(model.scaler.hi()) + "] final_loss=" +
                         format_real(model.loss_curve.empty() ? 0.0 : model.loss_curve.back());
        for (const auto& w : model.warnings) run.parameters += " warning=\"" + w + "\"";
        run.artifacts.emplace_back("weights/" + id + ".txt", model.weights.dump());
    } else {
        throw ConfigError("unknown model '" + id + "'");
    }
    return run;
}

std::string versions_line() {
    std::ostringstream o;
    o << "volforge " << volforge_version << "; eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
      << EIGEN_MINOR_VERSION << "; boost " << BOOST_VERSION / 100000 << '.' << BOOST_VERSION / 100 % 1000 << '.'
      << BOOST_VERSION % 100 << "; compiler " << __VERSION__;
    return o.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult result;
    result.data = load_data(config);
    RVSeries& data = result.data;
    const Partition part = split(data.size(), config.split, 30);
    for (double v : data.rv)
        if (!std::isfinite(v) || v < 0.0) throw DataError("rv series contains a negative or non-finite value");

    RunManifest& manifest = result.manifest;
    manifest.zero_floor = apply_zero_floor(data.rv, part.train_end);
    manifest.config_hash = config.hash();
    manifest.canonical_config = config.canonical();
    manifest.versions = versions_line();
    manifest.series_length = data.size();
    manifest.partition = part;

    // registry order, independent of the order models were listed in
    std::vector<std::string> ids;
    for (const auto& id : model_registry())
        if (std::find(config.models.begin(), config.models.end(), id) != config.models.end()) ids.push_back(id);

    std::vector<std::optional<ModelRun>> runs(ids.size());
    std::vector<ModelEntry> entries(ids.size());
    parallel_for(ids.size(), [&](std::size_t k) {
        entries[k].model_id = ids[k];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            runs[k] = run_model(ids[k], config, data, part);
            entries[k].parameters = runs[k]->parameters;
        } catch (const DataError&) {
            throw;
        } catch (const std::exception& e) {
            entries[k].failure = one_line(e.what());
        }
        entries[k].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
    manifest.models = entries;

    std::vector<std::pair<std::string, std::string>> failures;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (!runs[k]) {
            failures.emplace_back(ids[k], entries[k].failure);
            continue;
        }
        result.validation_records.push_back(runs[k]->validation);
        result.test_records.push_back(runs[k]->test);
        for (auto& a : runs[k]->artifacts) result.artifacts.push_back(std::move(a));
    }
    if (result.validation_records.empty()) {
        std::string why;
        for (const auto& [id, reason] : failures) why += "\n  " + id + ": " + reason;
        throw AllModelsFailed("every model failed:" + why);
    }

    auto has = [&](const std::string& id) {
        return std::any_of(result.test_records.begin(), result.test_records.end(),
                           [&](const ForecastRecord& r) { return r.model_id == id; });
    };
    std::string reference = config.reference_model;
    if (reference.empty() || !has(reference)) reference = has("naive") ? "naive" : result.test_records.front().model_id;
    manifest.reference_model = reference;

    result.validation = build_report(result.validation_records, reference, "validation");
    result.test = build_report(result.test_records, reference, "test");
    result.validation.failures = failures;
    result.test.failures = failures;
    return result;
}

std::vector<std::filesystem::path> emit_plot_data(std::span<const ForecastRecord> records,
                                                  const std::filesystem::path& dir, const std::string& suffix,
                                                  Aggregation aggregation) {
    if (records.empty()) throw std::invalid_argument("emit_plot_data: no records");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> paths;
    for (const auto& r : records) {
        r.validate();
        std::string out = "period,actual,predicted\n";
        for (std::size_t i = 0; i < r.actual.size(); ++i)
            out += bucket_label(r.periods[i], aggregation) + ',' + format_real(r.actual[i]) + ',' +
                   format_real(r.predicted[i]) + '\n';
        const auto path = dir / (r.model_id + "_" + suffix + ".csv");
        write_file_atomic(path, out);
        paths.push_back(path);
    }
    return paths;
}

void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir) {
    std::error_code ec;
    for (const char* sub : {"", "plots", "search", "weights"}) {
        std::filesystem::create_directories(dir / sub, ec);
        if (ec) throw std::runtime_error("cannot create " + (dir / sub).string() + ": " + ec.message());
    }
    write_file_atomic(dir / "report_validation.csv", report_csv(result.validation));
    write_file_atomic(dir / "report_test.csv", report_csv(result.test));
    write_file_atomic(dir / "report_validation.txt", report_text(result.validation));
    write_file_atomic(dir / "report_test.txt", report_text(result.test));
    emit_plot_data(result.validation_records, dir / "plots", "validation", result.data.aggregation);
    emit_plot_data(result.test_records, dir / "plots", "test", result.data.aggregation);
    for (const auto& [name, content] : result.artifacts) write_file_atomic(dir / name, content);
    write_rv_csv(dir / "rv.csv", result.data);
    write_file_atomic(dir / "manifest.txt", result.manifest.text());
}

}  // namespace volforge
