#pragma once

#include "volforge/series.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace volforge {

/// Parses `2020-01-02T09:30:00`, `2020-01-02 09:30:00`, `2020-01-02T09:30`,
/// `2020-01-02` with an optional trailing `Z`. Interpreted as UTC.
std::optional<Timestamp> parse_iso8601(std::string_view text);

/// Strict decimal parse: rejects empty fields, trailing junk, NaN and inf.
std::optional<double> parse_real(std::string_view text);

/// Reads a `timestamp,price` file. Timestamps are either all ISO-8601 or all
/// integer epoch seconds. The base frequency is the smallest timestamp gap.
/// Throws DataError with the offending line number.
PriceSeries read_price_csv(const std::filesystem::path& path);

void write_price_csv(const std::filesystem::path& path, const PriceSeries& prices);

/// `period,rv` with bucket labels.
void write_rv_csv(const std::filesystem::path& path, const RVSeries& rv);

/// Generic numeric table: first column is kept as text, the rest are parsed
/// as reals. Used to read back rv and plot-data files.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::string> keys;
    std::vector<std::vector<double>> columns;
};
CsvTable read_keyed_csv(const std::filesystem::path& path);

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest round-trip decimal representation.
std::string format_real(double value);

}  // namespace volforge
