#pragma once

// Dependency-free SVG line charts for the evaluation reports.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "cass/core.hpp"

namespace cass {

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> xy;
};

struct SvgPanel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
};

namespace detail {

inline std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline const char* series_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return palette[i % (sizeof palette / sizeof palette[0])];
}

}  // namespace detail

// Writes one SVG file with the panels laid out left to right. Each panel is a
// line chart with its own axes; y is padded to at least [0, 1] when the data
// already lies inside it.
inline void write_svg_chart(const std::vector<SvgPanel>& panels,
                            const std::string& path) {
  check_arg(!panels.empty(), "svg chart needs at least one panel");
  for (const SvgPanel& p : panels) {
    check_arg(!p.series.empty(), "svg panel needs at least one series");
    for (const SvgSeries& s : p.series)
      check_arg(!s.xy.empty(), "svg series needs at least one point");
  }

  const double pw = 380, ph = 300;
  const double ml = 52, mr = 14, mt = 34, mb = 40;
  const double width = pw * panels.size(), height = ph;

  std::ofstream os(path);
  if (!os) throw io_error("cannot open svg for writing: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
     << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";

  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const SvgPanel& panel = panels[pi];
    double x0 = pi * pw + ml, y0 = mt;
    double iw = pw - ml - mr, ih = ph - mt - mb;

    double xmin = panel.series[0].xy[0].first, xmax = xmin;
    double ymin = panel.series[0].xy[0].second, ymax = ymin;
    for (const SvgSeries& s : panel.series)
      for (auto [x, y] : s.xy) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    if (ymin >= 0.0 && ymax <= 1.0) {
      ymin = 0.0;
      ymax = 1.0;
    }
    if (xmax - xmin < 1e-12) {
      xmin -= 1.0;
      xmax += 1.0;
    }
    if (ymax - ymin < 1e-12) {
      ymin -= 1.0;
      ymax += 1.0;
    }
    auto sx = [&](double x) { return x0 + (x - xmin) / (xmax - xmin) * iw; };
    auto sy = [&](double y) { return y0 + ih - (y - ymin) / (ymax - ymin) * ih; };

    os << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << iw
       << "\" height=\"" << ih << "\" fill=\"none\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << x0 + iw / 2 << "\" y=\"" << y0 - 14
       << "\" text-anchor=\"middle\" font-size=\"13\">" << panel.title
       << "</text>\n";
    os << "<text x=\"" << x0 + iw / 2 << "\" y=\"" << y0 + ih + 32
       << "\" text-anchor=\"middle\">" << panel.x_label << "</text>\n";
    os << "<text x=\"" << x0 - 40 << "\" y=\"" << y0 + ih / 2
       << "\" text-anchor=\"middle\" transform=\"rotate(-90 " << x0 - 40 << " "
       << y0 + ih / 2 << ")\">" << panel.y_label << "</text>\n";

    for (int t = 0; t <= 4; ++t) {
      double fx = xmin + (xmax - xmin) * t / 4;
      double fy = ymin + (ymax - ymin) * t / 4;
      os << "<line x1=\"" << sx(fx) << "\" y1=\"" << y0 + ih << "\" x2=\""
         << sx(fx) << "\" y2=\"" << y0 + ih + 4 << "\" stroke=\"#333\"/>\n";
      os << "<text x=\"" << sx(fx) << "\" y=\"" << y0 + ih + 16
         << "\" text-anchor=\"middle\">" << detail::fmt_tick(fx) << "</text>\n";
      os << "<line x1=\"" << x0 - 4 << "\" y1=\"" << sy(fy) << "\" x2=\"" << x0
         << "\" y2=\"" << sy(fy) << "\" stroke=\"#333\"/>\n";
      os << "<text x=\"" << x0 - 6 << "\" y=\"" << sy(fy) + 4
         << "\" text-anchor=\"end\">" << detail::fmt_tick(fy) << "</text>\n";
    }

    for (std::size_t si = 0; si < panel.series.size(); ++si) {
      const SvgSeries& s = panel.series[si];
      os << "<polyline fill=\"none\" stroke=\"" << detail::series_color(si)
         << "\" stroke-width=\"1.5\" points=\"";
      for (auto [x, y] : s.xy)
        os << detail::fmt_coord(sx(x)) << "," << detail::fmt_coord(sy(y)) << " ";
      os << "\"/>\n";
      double lx = x0 + iw - 6, ly = y0 + 12 + 13 * si;
      os << "<line x1=\"" << lx - 58 << "\" y1=\"" << ly - 4 << "\" x2=\""
         << lx - 44 << "\" y2=\"" << ly - 4 << "\" stroke=\""
         << detail::series_color(si) << "\" stroke-width=\"2\"/>\n";
      os << "<text x=\"" << lx - 40 << "\" y=\"" << ly
         << "\" text-anchor=\"start\">" << s.label << "</text>\n";
    }
  }
  os << "</svg>\n";
  if (!os) throw io_error("write failure on svg: " + path);
}

}  // namespace cass
