#include "volforge/csv.hpp"

#include "volforge/calendar.hpp"
#include "volforge/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace volforge {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool parse_unsigned(std::string_view s, int& out) {
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && out >= 0;
}

std::optional<Timestamp> parse_epoch(std::string_view s) {
    Timestamp v{};
    if (s.empty()) return std::nullopt;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

}  // namespace

std::optional<Timestamp> parse_iso8601(std::string_view text) {
    std::string_view s = trim(text);
    if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
    if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
    if (!parse_unsigned(s.substr(0, 4), year) || !parse_unsigned(s.substr(5, 2), month) ||
        !parse_unsigned(s.substr(8, 2), day))
        return std::nullopt;
    if (month < 1 || month > 12 || day < 1 || day > 31) return std::nullopt;
    if (s.size() > 10) {
        if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
        const std::string_view time = s.substr(11);
        if (time.size() != 5 && time.size() != 8) return std::nullopt;
        if (time[2] != ':' || !parse_unsigned(time.substr(0, 2), hour) || !parse_unsigned(time.substr(3, 2), minute))
            return std::nullopt;
        if (time.size() == 8 && (time[5] != ':' || !parse_unsigned(time.substr(6, 2), second))) return std::nullopt;
        if (hour > 23 || minute > 59 || second > 60) return std::nullopt;
    }
    const std::int64_t days =
        days_from_civil({year, static_cast<unsigned>(month), static_cast<unsigned>(day)});
    if (civil_from_days(days).day != static_cast<unsigned>(day)) return std::nullopt;
    return days * 86400 + hour * 3600 + minute * 60 + second;
}

std::optional<double> parse_real(std::string_view text) {
    const std::string_view s = trim(text);
    if (s.empty()) return std::nullopt;
    double v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

PriceSeries read_price_csv(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    const auto header = split_fields(line);
    if (header.size() != 2 || header[0] != "timestamp" || header[1] != "price")
        throw DataError(path.string() + ": expected header 'timestamp,price'");

    enum class Format { unknown, epoch, iso } format = Format::unknown;
    std::vector<Timestamp> timestamps;
    std::vector<double> prices;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (fields.size() != 2) throw DataError(where + ": expected 2 fields");

        std::optional<Timestamp> ts;
        if (format != Format::iso) {
            ts = parse_epoch(fields[0]);
            if (ts && format == Format::unknown) format = Format::epoch;
        }
        if (!ts && format != Format::epoch) {
            ts = parse_iso8601(fields[0]);
            if (ts && format == Format::unknown) format = Format::iso;
        }
        if (!ts) throw DataError(where + ": bad or inconsistent timestamp '" + std::string(fields[0]) + "'");

        const auto price = parse_real(fields[1]);
        if (!price) throw DataError(where + ": bad price '" + std::string(fields[1]) + "'");
        timestamps.push_back(*ts);
        prices.push_back(*price);
    }
    if (timestamps.size() < 2) throw DataError(path.string() + ": need at least 2 price rows");

    std::int64_t base = std::numeric_limits<std::int64_t>::max();
    for (std::size_t i = 1; i < timestamps.size(); ++i) base = std::min(base, timestamps[i] - timestamps[i - 1]);
    try {
        return PriceSeries(std::move(timestamps), std::move(prices), std::max<std::int64_t>(base, 1));
    } catch (const std::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string format_real(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

void write_price_csv(const std::filesystem::path& path, const PriceSeries& prices) {
    std::ostringstream out;
    out << "timestamp,price\n";
    for (std::size_t i = 0; i < prices.size(); ++i)
        out << prices.timestamps()[i] << ',' << format_real(prices.prices()[i]) << '\n';
    write_file_atomic(path, out.str());
}

void write_rv_csv(const std::filesystem::path& path, const RVSeries& rv) {
    std::ostringstream out;
    out << "period,rv\n";
    for (std::size_t i = 0; i < rv.size(); ++i) out << rv.label(i) << ',' << format_real(rv.rv[i]) << '\n';
    write_file_atomic(path, out.str());
}

CsvTable read_keyed_csv(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    for (auto field : split_fields(line)) table.header.emplace_back(field);
    if (table.header.size() < 2) throw DataError(path.string() + ": need at least 2 columns");
    table.columns.resize(table.header.size() - 1);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != table.header.size())
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": wrong field count");
        table.keys.emplace_back(fields[0]);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            const auto v = parse_real(fields[c]);
            if (!v) throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number");
            table.columns[c - 1].push_back(*v);
        }
    }
    return table;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace volforge
