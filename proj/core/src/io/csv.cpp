#include "cpwloss/io/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>

#include "cpwloss/error.hpp"

namespace cpwloss::io {

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.emplace_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<std::size_t> CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t CsvTable::require_column(std::string_view name) const {
  if (auto idx = column(name)) return *idx;
  throw ParseError("missing CSV column '" + std::string(name) + "'");
}

CsvTable read_csv(std::istream& in, bool has_header) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool header_done = !has_header;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '#' || text.front() == '!') {
      table.comments.emplace_back(text.substr(1));
      continue;
    }
    if (!header_done) {
      table.header = split_csv_line(text);
      header_done = true;
      continue;
    }
    auto cells = split_csv_line(text);
    if (!table.header.empty() && cells.size() != table.header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " columns, found " +
                       std::to_string(cells.size()));
    }
    table.rows.push_back({line_no, std::move(cells)});
  }
  return table;
}

CsvTable read_csv_file(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return read_csv(in, has_header);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

double parse_double(std::string_view text, std::size_t line) {
  text = trim(text);
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (!text.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("line " + std::to_string(line) + ": not a number: '" + std::string(text) +
                     "'");
  }
  return value;
}

std::string format_double(double value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

}  // namespace cpwloss::io
