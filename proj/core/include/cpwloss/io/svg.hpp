#pragma once

// Small SVG line/scatter plotter. Every plot is emitted with a sibling CSV
// holding exactly the plotted numbers, which is what tests assert on.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cpwloss::io {

enum class SeriesStyle { kLine, kDashed, kMarkers };

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  SeriesStyle style = SeriesStyle::kLine;
  bool secondary_axis = false;  // plotted against Plot::y2
};

struct PlotAxis {
  std::string label;
  bool log = false;
  std::optional<double> lo;  // autoscaled when absent
  std::optional<double> hi;
};

struct Plot {
  std::string title;
  PlotAxis x;
  PlotAxis y;
  std::optional<PlotAxis> y2;
  std::vector<PlotSeries> series;
};

std::string render_svg(const Plot& plot);

/// Long format: series,axis,x,y with one row per plotted point.
std::string plot_data_csv(const Plot& plot);

/// Writes `stem`.svg and `stem`.csv atomically and returns both paths.
std::vector<std::filesystem::path> emit_plot(const std::filesystem::path& stem, const Plot& plot);

}  // namespace cpwloss::io
