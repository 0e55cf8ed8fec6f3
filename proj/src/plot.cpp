#include "uqf/plot.hpp"

#include "uqf/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace uqf::plot {

namespace {

constexpr double width = 640, height = 420;
constexpr double left = 70, right = 160, top = 40, bottom = 50;
constexpr const char* palette[] = {"#d62728", "#ff7f0e", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi == lo) lo -= 0.5, hi += 0.5;
    const double pad = 0.04 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

std::string tick(double v) {
  std::ostringstream os;
  os.precision(3);
  os << (std::abs(v) < 1e-12 ? 0.0 : v);
  return os.str();
}

}  // namespace

std::string render_svg(const Figure& fig) {
  Range rx, ry;
  for (const auto& s : fig.series) {
    for (double v : s.x) rx.add(v);
    for (double v : s.y) ry.add(v);
  }
  rx.settle();
  ry.settle();
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double v) { return left + (v - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto sy = [&](double v) { return top + ph - (v - ry.lo) / (ry.hi - ry.lo) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(fig.title)
     << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double vx = rx.lo + (rx.hi - rx.lo) * i / 5.0, vy = ry.lo + (ry.hi - ry.lo) * i / 5.0;
    os << "<text x=\"" << sx(vx) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << tick(vx)
       << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << sy(vy) + 4 << "\" text-anchor=\"end\">" << tick(vy)
       << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
     << escape(fig.x_label) << "</text>\n";
  os << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(fig.y_label) << "</text>\n";

  for (std::size_t k = 0; k < fig.series.size(); ++k) {
    const auto& s = fig.series[k];
    const char* colour = palette[k % std::size(palette)];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.markers) {
      for (std::size_t i = 0; i < n; ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
          os << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i]) << "\" r=\"2.5\" fill=\"" << colour
             << "\"/>\n";
    } else {
      os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < n; ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) os << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
      os << "\"/>\n";
    }
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    os << "<rect x=\"" << width - right + 12 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"10\" fill=\""
       << colour << "\"/>\n";
    os << "<text x=\"" << width - right + 30 << "\" y=\"" << ly << "\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_svg(const Figure& figure, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << render_svg(figure);
}

}  // namespace uqf::plot
