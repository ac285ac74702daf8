#include "cpwloss/io/trace_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cpwloss/error.hpp"
#include "cpwloss/io/csv.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss::io {

namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void apply_metadata(ComplexTrace& trace, const std::vector<std::string>& comments) {
  for (const auto& c : comments) {
    const auto eq = c.find('=');
    if (eq == std::string::npos) continue;
    const auto key = lower(trim(std::string_view(c).substr(0, eq)));
    const auto value = trim(std::string_view(c).substr(eq + 1));
    if (key == "applied_power_dbm") trace.applied_power_dbm = parse_double(value, 0);
    if (key == "line_attenuation_db") trace.line_attenuation_db = parse_double(value, 0);
    if (key == "temperature_k") trace.temperature = parse_double(value, 0);
  }
}

template <typename Fn>
auto with_path(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::ifstream open(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return in;
}

}  // namespace

ComplexTrace parse_trace_csv(std::istream& in) {
  const auto table = read_csv(in);
  const auto f = table.require_column("frequency_hz");
  const auto re = table.require_column("re_s21");
  const auto im = table.require_column("im_s21");
  ComplexTrace trace;
  apply_metadata(trace, table.comments);
  for (const auto& row : table.rows) {
    trace.frequencies.push_back(parse_double(row.cells[f], row.line));
    trace.s21.emplace_back(parse_double(row.cells[re], row.line),
                           parse_double(row.cells[im], row.line));
  }
  return validate_trace(std::move(trace));
}

std::string format_trace_csv(const ComplexTrace& trace) {
  std::ostringstream out;
  out << "# applied_power_dbm = " << format_double(trace.applied_power_dbm) << "\n"
      << "# line_attenuation_db = " << format_double(trace.line_attenuation_db) << "\n"
      << "# temperature_k = " << format_double(trace.temperature) << "\n"
      << "frequency_hz,re_s21,im_s21\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << format_double(trace.frequencies[i]) << ',' << format_double(trace.s21[i].real()) << ','
        << format_double(trace.s21[i].imag()) << '\n';
  }
  return out.str();
}

ComplexTrace parse_touchstone(std::istream& in) {
  double unit = 1e9;  // GHz is the Touchstone default
  std::string format = "ma";
  bool option_seen = false;
  bool order_12_21 = false;
  std::vector<double> numbers;
  std::vector<std::size_t> number_lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto bang = line.find('!'); bang != std::string::npos) line.erase(bang);
    const auto text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '[') {
      const auto key = lower(text);
      if (key.rfind("[number of ports]", 0) == 0) {
        std::istringstream rest(key.substr(17));
        int ports = 0;
        rest >> ports;
        if (ports != 2) {
          throw ParseError("line " + std::to_string(line_no) + ": expected a 2-port file");
        }
      } else if (key.rfind("[two-port data order]", 0) == 0) {
        order_12_21 = key.find("12_21") != std::string::npos;
      } else if (key.rfind("[end]", 0) == 0) {
        break;
      }
      continue;
    }
    if (text.front() == '#') {
      if (option_seen) continue;  // only the first option line counts
      option_seen = true;
      std::istringstream opts{lower(text.substr(1))};
      std::string token;
      while (opts >> token) {
        if (token == "hz") unit = 1.0;
        else if (token == "khz") unit = 1e3;
        else if (token == "mhz") unit = 1e6;
        else if (token == "ghz") unit = 1e9;
        else if (token == "ri" || token == "ma" || token == "db") format = token;
        else if (token == "y" || token == "z" || token == "h" || token == "g") {
          throw ParseError("line " + std::to_string(line_no) + ": only S parameters are supported");
        } else if (token == "r") {
          opts >> token;  // reference impedance, not needed for S21
        }
      }
      continue;
    }
    std::istringstream values{std::string(text)};
    std::string token;
    while (values >> token) {
      numbers.push_back(parse_double(token, line_no));
      number_lines.push_back(line_no);
    }
  }
  if (numbers.size() % 9 != 0) {
    throw ParseError("Touchstone data has " + std::to_string(numbers.size()) +
                     " values, not a multiple of 9 for a 2-port file");
  }
  ComplexTrace trace;
  const std::size_t s21_pair = order_12_21 ? 5 : 3;
  for (std::size_t k = 0; k < numbers.size(); k += 9) {
    trace.frequencies.push_back(numbers[k] * unit);
    const double x = numbers[k + s21_pair];
    const double y = numbers[k + s21_pair + 1];
    const double angle = y * units::kPi / 180.0;
    if (format == "ri") {
      trace.s21.emplace_back(x, y);
    } else if (format == "ma") {
      trace.s21.push_back(std::polar(x, angle));
    } else {
      trace.s21.push_back(std::polar(std::pow(10.0, x / 20.0), angle));
    }
  }
  return validate_trace(std::move(trace));
}

std::string format_touchstone(const ComplexTrace& trace) {
  std::ostringstream out;
  out << "! S21 trace\n# Hz S RI R 50\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& s = trace.s21[i];
    out << format_double(trace.frequencies[i]) << " 0 0 " << format_double(s.real()) << ' '
        << format_double(s.imag()) << ' ' << format_double(s.real()) << ' '
        << format_double(s.imag()) << " 0 0\n";
  }
  return out.str();
}

ComplexTrace read_trace(const std::string& path) {
  return with_path(path, [&] {
    auto in = open(path);
    const auto dot = path.rfind('.');
    const auto ext = dot == std::string::npos ? std::string() : lower(path.substr(dot));
    return ext == ".s2p" ? parse_touchstone(in) : parse_trace_csv(in);
  });
}

DecayTrace parse_decay_csv(std::istream& in) {
  const auto table = read_csv(in);
  const auto d = table.require_column("delay_s");
  const auto p = table.require_column("population");
  DecayTrace trace;
  for (const auto& row : table.rows) {
    trace.delays.push_back(parse_double(row.cells[d], row.line));
    trace.population.push_back(parse_double(row.cells[p], row.line));
  }
  check_invariants(trace);
  return trace;
}

std::string format_decay_csv(const DecayTrace& trace) {
  std::ostringstream out;
  out << "delay_s,population\n";
  for (std::size_t i = 0; i < trace.delays.size(); ++i) {
    out << format_double(trace.delays[i]) << ',' << format_double(trace.population[i]) << '\n';
  }
  return out.str();
}

DecayTrace read_decay(const std::string& path) {
  return with_path(path, [&] {
    auto in = open(path);
    return parse_decay_csv(in);
  });
}

}  // namespace cpwloss::io
