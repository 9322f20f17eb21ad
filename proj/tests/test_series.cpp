#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "volforge/csv.hpp"
#include "volforge/errors.hpp"
#include "volforge/rng.hpp"
#include "volforge/series.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace volforge;

namespace {

PriceSeries prices_of(std::vector<double> p) {
    std::vector<Timestamp> t(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) t[i] = 1577836800 + 60 * static_cast<Timestamp>(i);
    return PriceSeries(t, std::move(p), 60);
}

ReturnSeries one_bucket(std::vector<double> r) {
    ReturnSeries out;
    for (std::size_t i = 0; i < r.size(); ++i) out.timestamps.push_back(1577836800 + 60 * static_cast<Timestamp>(i + 1));
    out.returns = std::move(r);
    return out;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("volforge_series_" + name);
}

}  // namespace

TEST_CASE("price series invariants") {
    CHECK_THROWS_AS(prices_of({100.0}), std::invalid_argument);
    CHECK_THROWS_AS(PriceSeries({1, 1}, {1.0, 2.0}, 1), std::invalid_argument);
    try {
        prices_of({100.0, 101.0, -3.0});
        FAIL("expected domain error");
    } catch (const std::domain_error& e) {
        CHECK(std::string(e.what()).find("index 2") != std::string::npos);
    }
    CHECK_THROWS_AS(prices_of({100.0, 0.0}), std::domain_error);
}

TEST_CASE("log returns") {
    CHECK(log_returns(prices_of({100, 100})).returns == std::vector<double>{0.0});
    CHECK(log_returns(prices_of({100, 105})).returns[0] == doctest::Approx(0.04879016416943205).epsilon(1e-14));

    const auto r = log_returns(prices_of({100, 105, 100})).returns;
    REQUIRE(r.size() == 2);
    CHECK(r[0] == doctest::Approx(0.04879016416943205).epsilon(1e-14));
    CHECK(r[1] == doctest::Approx(-0.04879016416943205).epsilon(1e-14));
}

TEST_CASE("price reconstruction from cumulative log returns") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p{50.0 + 100.0 * rng.uniform()};
        for (int i = 0; i < 200; ++i) p.push_back(p.back() * std::exp(0.05 * rng.normal()));
        const auto r = log_returns(prices_of(p)).returns;
        double cum = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            cum += r[j];
            CHECK(std::abs(p[0] * std::exp(cum) - p[j + 1]) <= 1e-10 * p[j + 1]);
        }
    }
}

TEST_CASE("realized volatility of a single bucket") {
    CHECK(realized_volatility(one_bucket({0, 0, 0}), Aggregation::day).series.rv[0] == 0.0);
    CHECK(realized_volatility(one_bucket({0.01, -0.02, 0.015}), Aggregation::day).series.rv[0] ==
          doctest::Approx(0.026925824035672518).epsilon(1e-14));
    CHECK(realized_volatility(one_bucket({-0.037}), Aggregation::day).series.rv[0] == doctest::Approx(0.037));
    CHECK_THROWS_AS(realized_volatility(one_bucket({}), Aggregation::day), std::invalid_argument);
    CHECK_THROWS_AS(parse_aggregation("week"), std::invalid_argument);
}

TEST_CASE("realized volatility is permutation invariant and scale equivariant") {
    Rng rng(5);
    std::vector<double> r(50);
    for (double& v : r) v = 0.01 * rng.normal();
    const double base = realized_volatility(one_bucket(r), Aggregation::day).series.rv[0];

    std::vector<double> shuffled(r.rbegin(), r.rend());
    std::swap(shuffled[3], shuffled[40]);
    CHECK(realized_volatility(one_bucket(shuffled), Aggregation::day).series.rv[0] ==
          doctest::Approx(base).epsilon(1e-13));

    for (double c : {0.0, 0.5, 3.0}) {
        std::vector<double> scaled(r);
        for (double& v : scaled) v *= c;
        CHECK(realized_volatility(one_bucket(scaled), Aggregation::day).series.rv[0] ==
              doctest::Approx(c * base).epsilon(1e-13));
    }
}

TEST_CASE("calendar buckets and min_returns") {
    // 2020-03-01T14:30:00Z
    const Timestamp t = 1583073000;
    CHECK(bucket_label(bucket_start(t, Aggregation::hour), Aggregation::hour) == "2020-03-01T14");
    CHECK(bucket_label(bucket_start(t, Aggregation::day), Aggregation::day) == "2020-03-01");
    CHECK(bucket_label(bucket_start(t, Aggregation::month), Aggregation::month) == "2020-03");
    CHECK(bucket_start(t, Aggregation::month) == *parse_iso8601("2020-03-01"));

    ReturnSeries r;
    // two returns on Jan 1st, one on Jan 2nd, three on Jan 3rd
    for (Timestamp ts : {1577840000, 1577850000, 1577930000, 1578020000, 1578030000, 1578040000}) {
        r.timestamps.push_back(ts);
        r.returns.push_back(0.01);
    }
    const auto all = realized_volatility(r, Aggregation::day);
    CHECK(all.series.size() == 3);
    CHECK(all.series.counts == std::vector<std::size_t>{2, 1, 3});
    CHECK(all.series.bucket_returns[2] == doctest::Approx(0.03));

    const auto filtered = realized_volatility(r, Aggregation::day, 2);
    CHECK(filtered.series.size() == 2);
    REQUIRE(filtered.dropped.size() == 1);
    CHECK(bucket_label(filtered.dropped[0], Aggregation::day) == "2020-01-02");

    const auto monthly = realized_volatility(r, Aggregation::month);
    CHECK(monthly.series.size() == 1);
    CHECK(monthly.series.rv[0] == doctest::Approx(std::sqrt(6e-4)));
}

TEST_CASE("aggregate_log_rv") {
    const std::vector<double> e{std::exp(1.0), std::exp(2.0), std::exp(3.0)};
    const auto two = aggregate_log_rv(e, 2);
    REQUIRE(two.size() == 2);
    CHECK(two[0] == doctest::Approx(1.5));
    CHECK(two[1] == doctest::Approx(2.5));

    const auto one = aggregate_log_rv(e, 1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(one[i] == doctest::Approx(std::log(e[i])));

    const std::vector<double> constant(30, 0.2);
    for (double v : aggregate_log_rv(constant, 22)) CHECK(v == doctest::Approx(std::log(0.2)));

    CHECK_THROWS_AS(aggregate_log_rv(std::vector<double>{0.1, 0.0}, 1), std::domain_error);
    CHECK_THROWS_AS(aggregate_log_rv(e, 0), std::invalid_argument);
}

TEST_CASE("zero floor uses the training partition") {
    std::vector<double> rv{0.5, 0.0, 0.2, 0.01, 0.0};
    const double floor = apply_zero_floor(rv, 3);
    CHECK(floor == doctest::Approx(0.2e-3));
    CHECK(rv[1] == floor);
    CHECK(rv[4] == floor);
    CHECK(rv[3] == 0.01);

    std::vector<double> no_zero{0.1, 0.2};
    CHECK(apply_zero_floor(no_zero, 2) == 0.0);
}

TEST_CASE("chronological split") {
    const Partition a = split(1000, {252, 252});
    CHECK(a.train_len() == 496);
    CHECK(a.validation_len() == 252);
    CHECK(a.test_len() == 252);

    CHECK_THROWS_AS(split(505, {252, 252}, 1), DataError);

    const Partition b = split(600, {100, 100});
    CHECK(b.train_len() == 400);
    CHECK(b.validation_len() == 100);
    CHECK(b.test_len() == 100);

    std::vector<double> x(600);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
    const std::span<const double> all(x);
    std::vector<double> joined;
    for (auto part : {b.train(all), b.validation(all), b.test(all)}) joined.insert(joined.end(), part.begin(), part.end());
    CHECK(joined == x);
}

TEST_CASE("min-max scaler") {
    const auto s = MinMaxScaler::fit(std::vector<double>{2, 4, 6});
    CHECK(s.transform(2.0) == 0.0);
    CHECK(s.transform(6.0) == 1.0);
    CHECK(s.transform(4.0) == 0.5);
    CHECK(s.transform(8.0) == 1.5);
    CHECK_THROWS_AS(MinMaxScaler::fit(std::vector<double>{3, 3, 3}), std::invalid_argument);

    Rng rng(3);
    std::vector<double> x(500);
    for (double& v : x) v = 1e-3 + 0.05 * rng.uniform();
    const auto scaler = MinMaxScaler::fit(x);
    const auto back = scaler.invert(scaler.transform(x));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) <= 1e-12 * std::abs(x[i]));
}

TEST_CASE("price csv ingestion") {
    const auto path = temp_file("prices.csv");
    {
        std::ofstream out(path);
        out << "timestamp,price\n2020-01-02T09:30:00,100\n2020-01-02T09:31:00Z,100.5\n2020-01-02 09:32:00,99.75\n";
    }
    const PriceSeries p = read_price_csv(path);
    CHECK(p.size() == 3);
    CHECK(p.base_frequency() == 60);
    CHECK(p.prices()[2] == 99.75);

    {
        std::ofstream out(path);
        out << "timestamp,price\n1577836800,1\n1577836860,2\n";
    }
    CHECK(read_price_csv(path).timestamps()[1] == 1577836860);

    for (const char* bad : {"timestamp,price\n1577836800,1\n2020-01-02,2\n", "timestamp,price\n1,1\n2,nan\n",
                            "timestamp,price\n1,1\n2,inf\n", "time,price\n1,1\n2,2\n", "timestamp,price\n1,1\n2,0\n",
                            "timestamp,price\n2,1\n1,2\n"}) {
        {
            std::ofstream out(path);
            out << bad;
        }
        CHECK_THROWS_AS(read_price_csv(path), DataError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("rv csv round trip") {
    RVSeries rv;
    rv.aggregation = Aggregation::day;
    rv.periods = {1577836800, 1577923200};
    rv.rv = {0.0123456789012345, 1.0 / 3.0};
    const auto path = temp_file("rv.csv");
    write_rv_csv(path, rv);
    const CsvTable table = read_keyed_csv(path);
    CHECK(table.header == std::vector<std::string>{"period", "rv"});
    CHECK(table.keys == std::vector<std::string>{"2020-01-01", "2020-01-02"});
    CHECK(table.columns[0] == rv.rv);
    std::filesystem::remove(path);
}
