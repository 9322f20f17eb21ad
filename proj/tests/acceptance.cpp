// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include "volforge/classical.hpp"
#include "volforge/evaluation.hpp"
#include "volforge/experiment.hpp"
#include "volforge/garch.hpp"
#include "volforge/rng.hpp"
#include "volforge/rnn.hpp"
#include "volforge/synth.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace volforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------------------

Outcome rv_consistency() {
    GbmSpec spec;
    spec.sigma = 0.2;
    spec.buckets = 1000;
    spec.seed = 11;
    const auto rows = rv_consistency_probe(spec, {39, 390});
    const double fine = *rows[1].mean_relative_error, coarse = *rows[0].mean_relative_error;
    const double bias = std::abs(rows[1].mean_rv2 - rows[1].mean_iv) / rows[1].mean_iv;
    Outcome o;
    o.detail = fmt("mean RV^2 off IV by %.4f at M=390; MRE %.4f (M=390) vs %.4f (M=39)", bias, fine, coarse);
    o.require(bias <= 0.05, "mean RV^2 outside 5% of IV");
    o.require(fine <= 0.5 * coarse, "relative error did not halve");
    return o;
}

Outcome garch_recovery() {
    GarchSimSpec spec;
    spec.omega = 1e-5;
    spec.alpha = 0.1;
    spec.beta = 0.85;
    spec.length = 5000;
    spec.seed = 2024;
    const GarchPath path = simulate_garch(spec);
    const auto& r = path.returns.returns;
    const GarchModel m = garch_fit(r, GarchFlavor::garch);
    const double at_truth = garch_loglik(GarchParams{1e-5, 0.1, 0.85, 0.0, m.params.mu}, r);
    Outcome o;
    o.detail = fmt("omega %.3e alpha %.4f beta %.4f", m.params.omega, m.params.alpha, m.params.beta) +
               fmt(", loglik gain %.4f", m.loglik - at_truth);
    o.require(std::abs(m.params.alpha - 0.1) <= 0.05, "alpha");
    o.require(std::abs(m.params.beta - 0.85) <= 0.05, "beta");
    o.require(std::abs(m.params.omega - 1e-5) <= 0.5e-5, "omega");
    o.require(m.loglik >= at_truth - 1e-6, "loglik below truth");
    return o;
}

Outcome gradient_check() {
    Outcome o;
    double worst = 0.0;
    int count = 0;
    for (CellType cell : {CellType::lstm, CellType::gru})
        for (std::size_t layers : {1u, 2u})
            for (std::size_t window : {1u, 3u, 10u})
                for (LossKind loss : {LossKind::mse, LossKind::mae, LossKind::huber}) {
                    RnnConfig c;
                    c.cell = cell;
                    c.layers = layers;
                    c.window = window;
                    c.loss = loss;
                    c.units = 5;
                    Rng rng(7 + count);
                    const RnnWeights w = RnnWeights::initialize(c, rng);
                    std::vector<std::vector<double>> inputs(4, std::vector<double>(window));
                    std::vector<double> targets(4);
                    for (std::size_t b = 0; b < 4; ++b) {
                        for (double& v : inputs[b]) v = rng.uniform();
                        targets[b] = rng.uniform();
                    }
                    const double e = rnn_gradient_check(c, w, inputs, targets).max_relative_error;
                    worst = std::max(worst, e);
                    ++count;
                    o.require(e < 1e-4, std::string(to_string(cell)) + " layers " + std::to_string(layers) + " window " +
                                            std::to_string(window) + " " + std::string(to_string(loss)));
                }
    o.detail = std::to_string(count) + " configurations, worst " + fmt("%.2e", worst) + (o.detail.empty() ? "" : "; ") +
               o.detail;
    return o;
}

Outcome har_oracle() {
    const double c = -0.35, bd = 0.42, bw = 0.31, bm = 0.19;
    Rng rng(5);
    std::vector<double> lr(600);
    for (std::size_t t = 0; t < 22; ++t) lr[t] = -4.0 + 0.8 * rng.normal();
    for (std::size_t t = 22; t < lr.size(); ++t) {
        double w = 0.0, m = 0.0;
        for (std::size_t k = 0; k < 5; ++k) w += lr[t - 1 - k];
        for (std::size_t k = 0; k < 22; ++k) m += lr[t - 1 - k];
        lr[t] = c + bd * lr[t - 1] + bw * w / 5.0 + bm * m / 22.0;
    }
    std::vector<double> rv(lr.size());
    for (std::size_t t = 0; t < rv.size(); ++t) rv[t] = std::exp(lr[t]);
    const HarModel model = har_fit(rv, {1, 5, 22});

    // normal equations X'(y - Xb) in plain loops
    double g[4] = {0, 0, 0, 0}, xty[4] = {0, 0, 0, 0};
    const double b[4] = {model.c, model.beta_d, model.beta_w, model.beta_m};
    for (std::size_t t = 21; t + 1 < rv.size(); ++t) {
        double w = 0.0, m = 0.0;
        for (std::size_t k = 0; k < 5; ++k) w += std::log(rv[t - k]);
        for (std::size_t k = 0; k < 22; ++k) m += std::log(rv[t - k]);
        const double x[4] = {1.0, std::log(rv[t]), w / 5.0, m / 22.0};
        const double y = std::log(rv[t + 1]);
        double fit = 0.0;
        for (int j = 0; j < 4; ++j) fit += x[j] * b[j];
        for (int j = 0; j < 4; ++j) {
            g[j] += x[j] * (y - fit);
            xty[j] += x[j] * y;
        }
    }
    const double resid = std::hypot(std::hypot(g[0], g[1]), std::hypot(g[2], g[3])) /
                         std::hypot(std::hypot(xty[0], xty[1]), std::hypot(xty[2], xty[3]));
    const double err = std::max({std::abs(model.c - c), std::abs(model.beta_d - bd), std::abs(model.beta_w - bw),
                                 std::abs(model.beta_m - bm)});
    Outcome o;
    o.detail = fmt("max coefficient error %.2e, scaled normal-equation residual %.2e", err, resid);
    o.require(err < 1e-8, "coefficients");
    o.require(resid < 1e-8, "normal equations");
    return o;
}

double t_upper_tail(double t, double dof) {
    const double c = std::exp(std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof)) / std::sqrt(dof * std::numbers::pi);
    auto pdf = [&](double x) { return c * std::pow(1.0 + x * x / dof, -0.5 * (dof + 1.0)); };
    const double a = std::abs(t);
    const int n = 40000;
    const double h = a / n;
    double s = pdf(0.0) + pdf(a);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(i * h);
    const double inner = s * h / 3.0;
    return t >= 0.0 ? 0.5 - inner : 0.5 + inner;
}

Outcome dm_reference() {
    Outcome o;
    double worst_stat = 0.0, worst_p = 0.0;
    bool antisymmetric = true;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(100 + seed);
        ForecastRecord r1, r2;
        r1.model_id = "one";
        r2.model_id = "two";
        for (std::size_t t = 0; t < 252; ++t) {
            const double a = 0.01 * std::exp(0.5 * rng.normal());
            r1.actual.push_back(a);
            r2.actual.push_back(a);
            r1.predicted.push_back(a - 0.002 * rng.normal());
            r2.predicted.push_back(a - 0.0025 * rng.normal());
        }
        for (DmLoss loss : {DmLoss::squared, DmLoss::absolute}) {
            const double T = 252.0;
            std::vector<double> d(252);
            double mean = 0.0;
            for (std::size_t t = 0; t < 252; ++t) {
                const double e1 = r1.actual[t] - r1.predicted[t], e2 = r2.actual[t] - r2.predicted[t];
                d[t] = loss == DmLoss::squared ? e1 * e1 - e2 * e2 : std::abs(e1) - std::abs(e2);
                mean += d[t];
            }
            mean /= T;
            double var = 0.0;
            for (double v : d) var += (v - mean) * (v - mean);
            var /= T;
            const double stat = std::sqrt((T - 1.0) / T) * mean / std::sqrt(var / T);
            const double upper = t_upper_tail(stat, T - 1.0);
            const double p = 2.0 * std::min(upper, 1.0 - upper);

            const DmResult got = dm_test(r1, r2, loss);
            worst_stat = std::max(worst_stat, std::abs(got.statistic - stat));
            worst_p = std::max(worst_p, std::abs(got.p_value - p));
            const DmResult back = dm_test(r2, r1, loss);
            antisymmetric = antisymmetric && back.statistic == -got.statistic && back.p_value == got.p_value;
        }
    }
    o.detail = fmt("40 tests, max |dstat| %.1e, max |dp| %.1e", worst_stat, worst_p);
    o.require(worst_stat <= 1e-10, "statistic");
    o.require(worst_p <= 1e-10, "p-value");
    o.require(antisymmetric, "antisymmetry");
    return o;
}

std::vector<EvalReport> g_reports;  // every report produced by the runs below

Outcome metric_identities() {
    Outcome o;
    std::size_t rows = 0;
    for (const EvalReport& rep : g_reports)
        for (const ReportRow& row : rep.rows) {
            ++rows;
            const auto& m = row.metrics;
            o.require(std::abs(m.rmse * m.rmse - m.mse) <= 1e-12 * m.mse, row.model_id + " rmse^2 != mse");
            o.require(m.mae <= m.rmse, row.model_id + " mae > rmse");
        }
    ForecastRecord perfect;
    perfect.model_id = "perfect";
    perfect.actual = {0.01, 0.02, 0.015, 0.3};
    perfect.predicted = perfect.actual;
    const auto pm = point_metrics(perfect);
    o.require(pm.mape && *pm.mape == 0.0, "perfect mape");
    o.require(!g_reports.empty(), "no reports generated");
    o.detail = std::to_string(rows) + " rows in " + std::to_string(g_reports.size()) + " reports" +
               (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

template <class Log, class Key>
std::size_t replay_argmin(const Log& log, Key key) {
    std::size_t best = log.size();
    for (std::size_t i = 0; i < log.size(); ++i) {
        if (std::isnan(log[i].metric)) continue;
        if (best == log.size() || log[i].metric < log[best].metric ||
            (log[i].metric == log[best].metric && key(log[i]) < key(log[best])))
            best = i;
    }
    return best;
}

Outcome search_replay() {
    HarSimSpec sim;
    sim.length = 500;
    sim.seed = 3;
    const RVSeries data = simulate_har_rv(sim);
    const std::span<const double> rv(data.rv);
    const std::size_t train = 400;
    Outcome o;

    const auto grid = default_alpha_grid();
    const EwmaFit e = ewma_fit(rv, train, Metric::mse, grid);
    const std::size_t ei = replay_argmin(e.log, [](const EwmaCandidate& c) { return c.alpha; });
    o.require(e.log.size() == grid.size() && e.model.alpha == e.log[ei].alpha, "ewma_fit");

    const auto hg = default_har_grid();
    const HarSearch h = har_lag_search(rv, train, Metric::mse, hg);
    const std::size_t hi = replay_argmin(h.log, [](const HarCandidate& c) { return c.lags; });
    o.require(h.log.size() == hg.size() && h.model.lags == h.log[hi].lags, "har_lag_search");

    RnnConfig base;
    base.units = 5;
    base.epochs = 3;
    base.seed = 3;
    const std::vector<std::size_t> windows{1, 2, 5, 10, 22};
    const WindowSearch w = window_search(rv, train, base, windows, Metric::mse);
    const std::size_t wi = replay_argmin(w.log, [](const WindowCandidate& c) { return c.window; });
    o.require(w.log.size() == windows.size() && w.model.config.window == w.log[wi].window, "window_search");

    RnnGrid rg;
    rg.windows = {3, 10};
    rg.units = {5, 10};
    rg.learning_rates = {1e-3, 1e-2};
    rg.epochs = {3};
    rg.layers = {1};
    rg.dropouts = {0.01};
    rg.heads = {HeadActivation::linear};
    rg.losses = {LossKind::mse};
    rg.batch_sizes = {32};
    rg.optimizers = {OptimizerKind::adam};
    const auto cands = grid_candidates(rg, base, 6, 3);
    const HyperSearch s = hyperparameter_search(rv, train, cands, Metric::mse, 6, 3);
    const std::size_t si = replay_argmin(s.log, [](const HyperCandidate& c) { return c.config_id; });
    o.require(s.model.config.describe() == s.log[si].config.describe(), "hyperparameter_search");

    o.detail = std::to_string(e.log.size() + h.log.size() + w.log.size() + s.log.size()) + " logged candidates replayed" +
               (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

ExperimentConfig ranking_config(std::uint64_t seed) {
    ExperimentConfig cfg = parse_config(R"(
data.source = har
har_sim.length = 3000
split.validation = 252
split.test = 252
models = har, garch, lstm_window
metric = mae
rnn.units = 10
rnn.epochs = 50
rnn.learning_rate = 0.003
rnn.batch_size = 32
rnn.windows = 1..30
)");
    cfg.seed = seed;
    return cfg;
}

Outcome ranking() {
    Outcome o;
    int held = 0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const ExperimentResult r = run_experiment(ranking_config(seed));
        g_reports.push_back(r.validation);
        g_reports.push_back(r.test);
        double har = NAN, garch = NAN, lstm = NAN;
        std::size_t window = 0;
        for (const auto& row : r.test.rows) {
            if (row.model_id == "har") har = row.metrics.mae;
            if (row.model_id == "garch") garch = row.metrics.mae;
            if (row.model_id == "lstm_window") lstm = row.metrics.mae;
        }
        for (const auto& m : r.manifest.models) {
            const auto at = m.parameters.find("window=");
            if (m.model_id == "lstm_window" && at != std::string::npos) window = std::stoul(m.parameters.substr(at + 7));
        }
        const bool ok = har < garch && lstm < garch && lstm <= 1.05 * har;
        held += ok;
        per_seed += fmt(" [seed %.0f: lstm/har %.3f, garch/har %.3f", static_cast<double>(seed), lstm / har, garch / har) +
                    ", window " + std::to_string(window) + (ok ? "]" : " MISS]");
    }
    o.detail = std::to_string(held) + "/5 seeds" + per_seed;
    o.require(held >= 4, "fewer than 4 seeds");
    return o;
}

Outcome determinism(const std::string& cli) {
    const fs::path root = fs::temp_directory_path() / "volforge_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "run.cfg") << "data.source = har\nhar_sim.length = 800\nsplit.validation = 100\n"
                                       "split.test = 100\nrnn.units = 5\nrnn.epochs = 5\nrnn.windows = 2,5,10\n"
                                       "seed = 17\n";
    Outcome o;
    for (const char* run : {"a", "b"}) {
        const std::string cmd = cli + " run --config " + (root / "run.cfg").string() + " --out " + (root / run).string() +
                                " > " + (root / (std::string(run) + ".log")).string() + " 2>&1";
        o.require(std::system(cmd.c_str()) == 0, std::string("run ") + run + " failed");
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), root / "a");
        if (rel == "manifest.txt") continue;  // carries timings and the output dir
        ++compared;
        o.require(slurp(entry.path()) == slurp(root / "b" / rel), rel.string() + " differs");
    }
    o.require(load_config(root / "a" / "manifest.txt").hash() == load_config(root / "b" / "manifest.txt").hash(),
              "manifest hashes differ");
    for (const char* f : {"report_test.csv", "report_validation.csv"})
        o.require(fs::exists(root / "a" / f), std::string(f) + " missing");
    o.detail = std::to_string(compared) + " files byte-identical" + (o.detail.empty() ? "" : "; " + o.detail);

    ExperimentConfig cfg = load_config(root / "run.cfg");
    const ExperimentResult r = run_experiment(cfg);
    g_reports.push_back(r.validation);
    g_reports.push_back(r.test);
    return o;
}

Outcome var_scaling() {
    Outcome o;
    const double target = 1.6448536 * std::sqrt(10.0);
    double worst = 0.0;
    for (double s : {0.01, 0.1, 1.0}) worst = std::max(worst, std::abs(var_estimate(s, 10.0, 0.95) / s - target));
    o.detail = fmt("max deviation %.2e", worst);
    o.require(worst <= 1e-6, "scaling");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "volforge";
    struct Criterion {
        int id;
        const char* name;
        double limit;  // seconds, 0 for none
        std::function<Outcome()> check;
    };
    // 6 reads the reports produced by 8 and 9
    const std::vector<Criterion> criteria{
        {1, "rv consistency", 10, rv_consistency},
        {2, "garch recovery", 30, garch_recovery},
        {3, "rnn gradient check", 60, gradient_check},
        {4, "har oracle", 0, har_oracle},
        {5, "dm reference", 0, dm_reference},
        {7, "search replay", 0, search_replay},
        {8, "qualitative ranking", 900, ranking},
        {9, "end-to-end determinism", 0, [&] { return determinism(cli); }},
        {6, "metric identities", 0, metric_identities},
        {10, "var scaling", 0, var_scaling},
    };
    std::vector<std::string> lines(11);
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("threw: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit > 0 && secs >= c.limit) o.require(false, fmt("over the %.0f s limit", c.limit));
        failures += !o.pass;
        char head[96];
        std::snprintf(head, sizeof head, "%s %2d %-24s %8.2f s  ", o.pass ? "PASS" : "FAIL", c.id, c.name, secs);
        lines[c.id] = head + o.detail;
        std::fprintf(stderr, "%s\n", lines[c.id].c_str());
    }
    for (int id = 1; id <= 10; ++id) std::printf("%s\n", lines[id].c_str());
    return failures;
}
