#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace uqf::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false;  // scatter instead of a polyline
};

struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Minimal SVG line/scatter chart with axes, ticks and a legend.
std::string render_svg(const Figure& figure);
void write_svg(const Figure& figure, const std::filesystem::path& path);

}  // namespace uqf::plot
