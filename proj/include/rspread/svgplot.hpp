#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "rspread/model.hpp"

namespace rspread {

/// One trace of a line chart; `id` is stamped on the polyline element so
/// plot contents stay machine-checkable.
struct PlotSeries {
  std::string id;
  std::string label;
  std::string color = "#1f77b4";
  bool dashed = false;
  std::vector<double> x, y;
};

struct PlotPanel {
  std::string title;
  std::string ylabel;
  std::vector<PlotSeries> series;
};

namespace detail {

inline void panel_range(const PlotPanel& panel, double& lo, double& hi,
                        bool x_axis) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& s : panel.series) {
    const auto& v = x_axis ? s.x : s.y;
    for (double value : v) {
      if (!std::isfinite(value)) continue;
      lo = std::min(lo, value);
      hi = std::max(hi, value);
    }
  }
  if (!(lo < hi)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

inline std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace detail

/// Writes a column of line-chart panels sharing the x axis into a single
/// static SVG file.
inline void write_svg_panels(const std::string& path,
                             const std::string& xlabel,
                             const std::vector<PlotPanel>& panels) {
  const int width = 760, panel_h = 230, margin_l = 70, margin_r = 170,
            margin_t = 34, margin_b = 42;
  const int height = static_cast<int>(panels.size()) * panel_h;
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("write_svg_panels: cannot open " + path);
  std::fprintf(f,
               "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
               "height=\"%d\" font-family=\"Helvetica,Arial\" "
               "font-size=\"12\">\n<rect width=\"100%%\" height=\"100%%\" "
               "fill=\"white\"/>\n",
               width, height);

  for (size_t pi = 0; pi < panels.size(); ++pi) {
    const PlotPanel& panel = panels[pi];
    const int top = static_cast<int>(pi) * panel_h + margin_t;
    const int plot_w = width - margin_l - margin_r;
    const int plot_h = panel_h - margin_t - margin_b;
    double x_lo, x_hi, y_lo, y_hi;
    detail::panel_range(panel, x_lo, x_hi, true);
    detail::panel_range(panel, y_lo, y_hi, false);
    auto sx = [&](double v) {
      return margin_l + (v - x_lo) / (x_hi - x_lo) * plot_w;
    };
    auto sy = [&](double v) {
      return top + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h;
    };

    std::fprintf(f,
                 "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                 "fill=\"none\" stroke=\"#444\"/>\n",
                 margin_l, top, plot_w, plot_h);
    std::fprintf(f,
                 "<text x=\"%d\" y=\"%d\" font-weight=\"bold\">%s</text>\n",
                 margin_l, top - 8, panel.title.c_str());
    std::fprintf(f,
                 "<text x=\"14\" y=\"%d\" transform=\"rotate(-90 14 %d)\" "
                 "text-anchor=\"middle\">%s</text>\n",
                 top + plot_h / 2, top + plot_h / 2, panel.ylabel.c_str());

    for (int tick = 0; tick <= 4; ++tick) {
      const double xv = x_lo + tick * (x_hi - x_lo) / 4.0;
      const double yv = y_lo + tick * (y_hi - y_lo) / 4.0;
      std::fprintf(f,
                   "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\" "
                   "fill=\"#333\">%s</text>\n",
                   sx(xv), top + plot_h + 16, detail::format_tick(xv).c_str());
      std::fprintf(f,
                   "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\" "
                   "fill=\"#333\">%s</text>\n",
                   margin_l - 6, sy(yv) + 4, detail::format_tick(yv).c_str());
      std::fprintf(f,
                   "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" "
                   "stroke=\"#ddd\"/>\n",
                   margin_l, sy(yv), margin_l + plot_w, sy(yv));
    }

    int legend_y = top + 12;
    for (const PlotSeries& s : panel.series) {
      std::fprintf(f, "<polyline id=\"%s\" fill=\"none\" stroke=\"%s\"%s "
                      "stroke-width=\"1.3\" points=\"",
                   s.id.c_str(), s.color.c_str(),
                   s.dashed ? " stroke-dasharray=\"6 4\"" : "");
      const size_t n = std::min(s.x.size(), s.y.size());
      const size_t stride = std::max<size_t>(1, n / 1600);
      for (size_t i = 0; i < n; i += stride) {
        if (!std::isfinite(s.y[i])) continue;
        std::fprintf(f, "%.1f,%.1f ", sx(s.x[i]),
                     std::clamp(sy(s.y[i]), double(top - 6),
                                double(top + plot_h + 6)));
      }
      std::fputs("\"/>\n", f);
      std::fprintf(f,
                   "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" "
                   "stroke=\"%s\"%s stroke-width=\"1.3\"/>"
                   "<text x=\"%d\" y=\"%d\" fill=\"#222\">%s</text>\n",
                   margin_l + plot_w + 10, legend_y, margin_l + plot_w + 34,
                   legend_y, s.color.c_str(),
                   s.dashed ? " stroke-dasharray=\"6 4\"" : "",
                   margin_l + plot_w + 40, legend_y + 4, s.label.c_str());
      legend_y += 18;
    }
    std::fprintf(f,
                 "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" "
                 "fill=\"#333\">%s</text>\n",
                 margin_l + plot_w / 2, top + plot_h + 32, xlabel.c_str());
  }
  std::fputs("</svg>\n", f);
  std::fclose(f);
}

}  // namespace rspread
