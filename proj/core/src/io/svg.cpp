#include "cpwloss/io/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cpwloss/io/csv.hpp"
#include "cpwloss/io/files.hpp"

namespace cpwloss::io {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 460.0;
constexpr double kLeft = 90.0;
constexpr double kRight = 90.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_cell(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

struct Scale {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;
  double pixel_lo = 0.0;
  double pixel_hi = 1.0;

  bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
  double operator()(double v) const {
    const double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo))
                         : (v - lo) / (hi - lo);
    return pixel_lo + t * (pixel_hi - pixel_lo);
  }
};

Scale make_scale(const PlotAxis& axis, const std::vector<const std::vector<double>*>& data,
                 double pixel_lo, double pixel_hi) {
  Scale s;
  s.log = axis.log;
  s.pixel_lo = pixel_lo;
  s.pixel_hi = pixel_hi;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* values : data) {
    for (double v : *values) {
      if (!s.usable(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) {
    lo = s.log ? 1.0 : 0.0;
    hi = s.log ? 10.0 : 1.0;
  }
  if (s.log) {
    lo = std::pow(10.0, std::floor(std::log10(lo)));
    hi = std::pow(10.0, std::ceil(std::log10(hi)));
    if (hi <= lo) hi = lo * 10.0;
  } else {
    const double pad = hi > lo ? 0.05 * (hi - lo) : (lo != 0.0 ? 0.1 * std::abs(lo) : 1.0);
    lo -= pad;
    hi += pad;
  }
  s.lo = axis.lo.value_or(lo);
  s.hi = axis.hi.value_or(hi);
  return s;
}

std::vector<double> ticks(const Scale& s) {
  std::vector<double> out;
  if (s.log) {
    const int a = static_cast<int>(std::floor(std::log10(s.lo) + 1e-9));
    const int b = static_cast<int>(std::ceil(std::log10(s.hi) - 1e-9));
    const int stride = std::max(1, (b - a) / 8);
    for (int e = a; e <= b; e += stride) out.push_back(std::pow(10.0, e));
    return out;
  }
  const double raw = (s.hi - s.lo) / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  for (double v = std::ceil(s.lo / step) * step; v <= s.hi + 1e-9 * step; v += step) {
    out.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  }
  return out;
}

std::string tick_label(double v) {
  std::ostringstream out;
  out.precision(3);
  out << v;
  return out.str();
}

}  // namespace

std::string render_svg(const Plot& plot) {
  std::vector<const std::vector<double>*> xs, ys, y2s;
  for (const auto& s : plot.series) {
    xs.push_back(&s.x);
    (s.secondary_axis ? y2s : ys).push_back(&s.y);
  }
  const auto sx = make_scale(plot.x, xs, kLeft, kWidth - kRight);
  const auto sy = make_scale(plot.y, ys, kHeight - kBottom, kTop);
  const auto sy2 = plot.y2 ? make_scale(*plot.y2, y2s, kHeight - kBottom, kTop) : sy;

  std::ostringstream out;
  out.precision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(plot.title) << "</text>\n"
      << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight
      << "\" height=\"" << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double t : ticks(sx)) {
    const double px = sx(t);
    out << "<line x1=\"" << px << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << px << "\" y2=\""
        << kHeight - kBottom + 5 << "\" stroke=\"black\"/>"
        << "<text x=\"" << px << "\" y=\"" << kHeight - kBottom + 18
        << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t : ticks(sy)) {
    const double py = sy(t);
    out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << py << "\" x2=\"" << kLeft << "\" y2=\"" << py
        << "\" stroke=\"black\"/>"
        << "<text x=\"" << kLeft - 8 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">"
        << tick_label(t) << "</text>\n";
  }
  out << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 15
      << "\" text-anchor=\"middle\">" << escape(plot.x.label) << "</text>\n"
      << "<text transform=\"translate(20," << (kTop + kHeight - kBottom) / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(plot.y.label) << "</text>\n";
  if (plot.y2) {
    for (double t : ticks(sy2)) {
      const double py = sy2(t);
      out << "<line x1=\"" << kWidth - kRight << "\" y1=\"" << py << "\" x2=\"" << kWidth - kRight + 5
          << "\" y2=\"" << py << "\" stroke=\"black\"/>"
          << "<text x=\"" << kWidth - kRight + 8 << "\" y=\"" << py + 4 << "\">" << tick_label(t)
          << "</text>\n";
    }
    out << "<text transform=\"translate(" << kWidth - 15 << "," << (kTop + kHeight - kBottom) / 2
        << ") rotate(90)\" text-anchor=\"middle\">" << escape(plot.y2->label) << "</text>\n";
  }

  out << "<g>\n";
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const auto& ysc = s.secondary_axis ? sy2 : sy;
    const char* color = kPalette[k % std::size(kPalette)];
    std::ostringstream points;
    points.precision(6);
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!sx.usable(s.x[i]) || !ysc.usable(s.y[i])) continue;
      if (s.style == SeriesStyle::kMarkers) {
        out << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << ysc(s.y[i]) << "\" r=\"3\" fill=\""
            << color << "\"/>\n";
      } else {
        points << sx(s.x[i]) << ',' << ysc(s.y[i]) << ' ';
      }
    }
    if (s.style != SeriesStyle::kMarkers) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
          << (s.style == SeriesStyle::kDashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\""
          << points.str() << "\"/>\n";
    }
    const double ly = kTop + 16.0 * static_cast<double>(k + 1);
    out << "<rect x=\"" << kLeft + 10 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\""
        << color << "\"/><text x=\"" << kLeft + 25 << "\" y=\"" << ly << "\">" << escape(s.name)
        << "</text>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

std::string plot_data_csv(const Plot& plot) {
  std::ostringstream out;
  out << "series,axis,x,y\n";
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      out << csv_cell(s.name) << ',' << (s.secondary_axis ? "y2" : "y") << ','
          << format_double(s.x[i]) << ',' << format_double(s.y[i]) << '\n';
    }
  }
  return out.str();
}

std::vector<std::filesystem::path> emit_plot(const std::filesystem::path& stem, const Plot& plot) {
  auto svg = stem;
  svg += ".svg";
  auto csv = stem;
  csv += ".csv";
  write_file_atomic(svg, render_svg(plot));
  write_file_atomic(csv, plot_data_csv(plot));
  return {svg, csv};
}

}  // namespace cpwloss::io
