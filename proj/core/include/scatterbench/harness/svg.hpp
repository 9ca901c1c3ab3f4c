#pragma once

#include <string>
#include <utility>
#include <vector>

namespace scatterbench::harness {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
  int width = 640;
  int height = 420;
};

/// Standalone SVG document with axes, ticks, one polyline per series and a legend.
std::string render_svg(const LineChart& chart);

std::string xml_escape(const std::string& text);

}  // namespace scatterbench::harness
