#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cpwloss::io {

struct CsvRow {
  std::size_t line = 0;  // 1-based line number in the source
  std::vector<std::string> cells;
};

/// Minimal comma-separated table: first non-comment line is the header.
/// Lines starting with '#' are comments and are collected verbatim.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;
  std::vector<std::string> comments;

  /// Index of a header column, if present.
  std::optional<std::size_t> column(std::string_view name) const;
  std::size_t require_column(std::string_view name) const;
};

CsvTable read_csv(std::istream& in, bool has_header = true);
CsvTable read_csv_file(const std::string& path, bool has_header = true);

std::vector<std::string> split_csv_line(std::string_view line);
std::string_view trim(std::string_view text);

/// Strict numeric parse; throws ParseError mentioning `line`.
double parse_double(std::string_view text, std::size_t line);

/// Shortest round-trip representation of a double.
std::string format_double(double value);

}  // namespace cpwloss::io
