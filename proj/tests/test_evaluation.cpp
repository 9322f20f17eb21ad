#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "volforge/evaluation.hpp"
#include "volforge/rng.hpp"

#include <cmath>
#include <numbers>

using namespace volforge;

namespace {

ForecastRecord record(std::string id, std::vector<double> actual, std::vector<double> predicted) {
    ForecastRecord r;
    r.model_id = std::move(id);
    r.actual = std::move(actual);
    r.predicted = std::move(predicted);
    return r;
}

// Upper tail of Student-t by composite Simpson on the density; no library calls.
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

struct Reference {
    double statistic;
    double two_sided;
    double less;
};

Reference dm_reference(const std::vector<double>& e1, const std::vector<double>& e2, bool squared) {
    const std::size_t n = e1.size();
    std::vector<double> d(n);
    for (std::size_t t = 0; t < n; ++t)
        d[t] = squared ? e1[t] * e1[t] - e2[t] * e2[t] : std::abs(e1[t]) - std::abs(e2[t]);
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double T = static_cast<double>(n);
    const double stat = std::sqrt((T - 1.0) / T) * mean / std::sqrt(var / T);
    const double upper = t_upper_tail(stat, T - 1.0);
    return {stat, 2.0 * std::min(upper, 1.0 - upper), 1.0 - upper};
}

}  // namespace

TEST_CASE("point metrics") {
    const auto perfect = point_metrics(record("m", {1, 2, 3}, {1, 2, 3}));
    CHECK(perfect.mse == 0.0);
    CHECK(perfect.rmse == 0.0);
    CHECK(perfect.mae == 0.0);
    CHECK(*perfect.mape == 0.0);

    const auto m = point_metrics(record("m", {1, 2}, {2, 4}));
    CHECK(m.mse == 2.5);
    CHECK(m.rmse == doctest::Approx(1.5811388300841898).epsilon(1e-15));
    CHECK(m.mae == 1.5);
    CHECK(*m.mape == 100.0);

    const auto outlier = point_metrics(record("m", {1, 1, 1, 1}, {1, 1, 1, 11}));
    CHECK(outlier.mse == 25.0);
    CHECK(outlier.mae == 2.5);

    const auto zero = point_metrics(record("m", {0.0, 1.0}, {0.5, 1.0}));
    CHECK_FALSE(zero.mape.has_value());
    CHECK(zero.mse == 0.125);
    CHECK_THROWS_AS(mape(std::vector<double>{0.0, 1.0}, std::vector<double>{0.5, 1.0}), std::domain_error);

    CHECK_THROWS_AS(point_metrics(record("m", {1}, {1})), std::invalid_argument);
    CHECK_THROWS_AS(point_metrics(record("m", {1, 2}, {1})), std::invalid_argument);
    CHECK_THROWS_AS(point_metrics(record("m", {1, NAN}, {1, 2})), std::invalid_argument);
}

TEST_CASE("metric identities on random records") {
    Rng rng(4);
    for (int k = 0; k < 200; ++k) {
        std::vector<double> a(50), p(50);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = std::exp(rng.normal());
            p[i] = a[i] * std::exp(0.3 * rng.normal());
        }
        const auto m = point_metrics(record("m", a, p));
        CHECK(std::abs(m.rmse * m.rmse - m.mse) <= 1e-12 * m.mse);
        CHECK(m.mae <= m.rmse);
    }
}

TEST_CASE("DM against a frozen reference") {
    // errors e1 = sin t, e2 = 1.1 cos 0.7t, t = 1..30; values from scipy.stats.t
    std::vector<double> a, p1, p2;
    for (int t = 1; t <= 30; ++t) {
        a.push_back(1.0 + 0.1 * t);
        p1.push_back(a.back() - std::sin(t));
        p2.push_back(a.back() - 1.1 * std::cos(0.7 * t));
    }
    const auto r1 = record("one", a, p1), r2 = record("two", a, p2);
    const auto sq = dm_test(r1, r2, DmLoss::squared);
    CHECK(sq.statistic == doctest::Approx(-0.6295626576332511).epsilon(1e-12));
    CHECK(sq.p_value == doctest::Approx(0.5339096710143747).epsilon(1e-10));
    CHECK(dm_test(r1, r2, DmLoss::squared, Alternative::less).p_value ==
          doctest::Approx(0.26695483550718735).epsilon(1e-10));
    CHECK(dm_test(r1, r2, DmLoss::squared, Alternative::greater).p_value ==
          doctest::Approx(0.7330451644928127).epsilon(1e-10));
    const auto ab = dm_test(r1, r2, DmLoss::absolute);
    CHECK(ab.statistic == doctest::Approx(-0.4249141569654612).epsilon(1e-12));
    CHECK(ab.p_value == doctest::Approx(0.6740355233069255).epsilon(1e-10));
    CHECK(ab.harvey_adjusted);
}

TEST_CASE("DM matches a brute-force reference on seeded series") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        std::vector<double> a(252), p1(252), p2(252), e1(252), e2(252);
        for (std::size_t t = 0; t < a.size(); ++t) {
            a[t] = 0.01 * std::exp(0.5 * rng.normal());
            e1[t] = 0.002 * rng.normal();
            e2[t] = 0.002 * rng.normal() * (1.0 + 0.1 * static_cast<double>(seed % 4));
            p1[t] = a[t] - e1[t];
            p2[t] = a[t] - e2[t];
        }
        // predicted = actual - e reproduces e only up to rounding; the reference uses the same subtraction
        for (std::size_t t = 0; t < a.size(); ++t) {
            e1[t] = a[t] - p1[t];
            e2[t] = a[t] - p2[t];
        }
        const auto r1 = record("one", a, p1), r2 = record("two", a, p2);
        for (bool squared : {true, false}) {
            const DmLoss loss = squared ? DmLoss::squared : DmLoss::absolute;
            const Reference ref = dm_reference(e1, e2, squared);
            const auto two = dm_test(r1, r2, loss);
            CHECK(std::abs(two.statistic - ref.statistic) < 1e-10);
            CHECK(std::abs(two.p_value - ref.two_sided) < 1e-10);
            const auto less = dm_test(r1, r2, loss, Alternative::less);
            CHECK(std::abs(less.p_value - ref.less) < 1e-10);
            const auto greater = dm_test(r1, r2, loss, Alternative::greater);
            CHECK(std::abs(less.p_value + greater.p_value - 1.0) < 1e-12);
            CHECK(dm_test(r2, r1, loss).statistic == -two.statistic);
        }
    }
}

TEST_CASE("DM detects a worse second model") {
    Rng rng(21);
    std::vector<double> a(252), p1(252), p2(252);
    for (std::size_t t = 0; t < a.size(); ++t) {
        a[t] = 1.0;
        const double e = 0.1 * rng.normal();
        p1[t] = a[t] - e;
        // model 2 loses an extra positive amount on every step
        p2[t] = a[t] - std::copysign(std::abs(e) + 0.05 + 0.05 * rng.uniform(), e);
    }
    const auto r1 = record("good", a, p1), r2 = record("bad", a, p2);
    const auto res = dm_test(r1, r2, DmLoss::absolute, Alternative::less);
    CHECK(res.statistic < 0.0);
    CHECK(res.p_value < 1e-6);
}

TEST_CASE("DM errors") {
    std::vector<double> a(20, 1.0), p(20);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 + 0.01 * static_cast<double>(i);
    const auto r = record("m", a, p);
    try {
        dm_test(r, r, DmLoss::squared);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("indistinguishable") != std::string::npos);
    }
    CHECK_THROWS_AS(dm_test(r, record("short", {1, 2, 3}, {1, 2, 2}), DmLoss::squared), std::invalid_argument);
    const auto tiny = record("tiny", {1, 2, 3, 4, 5}, {1, 2, 3, 4, 6});
    CHECK_THROWS_AS(dm_test(tiny, record("t2", {1, 2, 3, 4, 5}, {2, 2, 3, 4, 5}), DmLoss::squared),
                    std::invalid_argument);
}

TEST_CASE("value at risk") {
    CHECK(var_estimate(0.0, 10, 0.95) == 0.0);
    // 0.1 * 1.6448536269514722 * sqrt(10)
    CHECK(var_estimate(0.1, 10, 0.95) == doctest::Approx(0.5201483878755575).epsilon(1e-12));
    CHECK(var_estimate(1.0, 1, 0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
    CHECK(var_estimate(1.0, 1, 0.99) == doctest::Approx(2.3263478740408408).epsilon(1e-12));
    for (double s : {0.01, 0.1, 1.0}) {
        CHECK(std::abs(var_estimate(2 * s, 10, 0.99) - 2 * var_estimate(s, 10, 0.99)) <= 1e-12 * var_estimate(s, 10, 0.99));
        CHECK(std::abs(var_estimate(s, 40, 0.95) - 2 * var_estimate(s, 10, 0.95)) <= 1e-12 * var_estimate(s, 10, 0.95));
    }
    CHECK_THROWS_AS(var_estimate(1.0, 10, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(var_estimate(1.0, 10, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(var_estimate(-1.0, 10, 0.95), std::invalid_argument);
}

TEST_CASE("report assembly") {
    Rng rng(6);
    std::vector<double> a(30), good(30), bad(30);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = 0.01 + 0.001 * rng.uniform();
        good[i] = a[i] + 0.0005 * rng.normal();
        bad[i] = a[i] + 0.002 * rng.normal();
    }
    std::vector<ForecastRecord> recs{record("naive", a, bad), record("har", a, good), record("twin", a, bad)};
    const EvalReport rep = build_report(recs, "naive", "test");
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].model_id == "naive");
    CHECK(rep.rows[1].model_id == "har");
    CHECK(rep.rows[2].model_id == "twin");
    CHECK(rep.rows[0].dm_squared.note == "ref");
    CHECK(rep.rows[2].dm_squared.note == "indistinguishable");
    CHECK(rep.rows[2].dm_absolute.note == "indistinguishable");
    CHECK(rep.rows[1].dm_squared.result.has_value());
    CHECK(rep.rows[1].best_mse);
    CHECK(rep.rows[1].best_mae);
    CHECK_FALSE(rep.rows[0].best_mse);
    CHECK(rep.rows[1].var95 == doctest::Approx(var_estimate(good.back(), 10, 0.95)));
    for (const auto& row : rep.rows) {
        CHECK(std::abs(row.metrics.rmse * row.metrics.rmse - row.metrics.mse) <= 1e-12 * row.metrics.mse);
        CHECK(row.metrics.mae <= row.metrics.rmse);
    }

    const std::string csv = report_csv(rep);
    CHECK(csv.rfind("model,mse_e-05,rmse_e-03,mae_e-03,mape_pct,", 0) == 0);
    CHECK(csv.find("\ntwin,") != std::string::npos);
    CHECK(report_text(rep).find("DM reference: naive") != std::string::npos);

    std::vector<ForecastRecord> shifted = recs;
    shifted[1].actual[0] += 1.0;
    CHECK_THROWS_AS(build_report(shifted, "naive", "test"), std::invalid_argument);
    CHECK_THROWS_AS(build_report(recs, "missing", "test"), std::invalid_argument);
}

TEST_CASE("table scale conventions") {
    // MSE 1.31e-4 renders as 13.1 in e-05 units
    std::vector<double> a(4, 1.0), p(4, 1.0 + std::sqrt(1.31e-4));
    std::vector<ForecastRecord> recs{record("lstm", a, p)};
    const std::string csv = report_csv(build_report(recs, "lstm", "test"));
    CHECK(csv.find("\nlstm,13.1000,") != std::string::npos);
}
