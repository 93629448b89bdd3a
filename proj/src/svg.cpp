#include "collapsim/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "collapsim/errors.hpp"

namespace collapsim {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  // Ticks snap to exact multiples of a decade-scaled {1,2,5} step, so %g at
  // modest precision renders them cleanly.
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  bool valid() const { return lo <= hi; }
  void include(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!valid()) return;
    if (lo == hi) {
      double d = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
      lo -= d;
      hi += d;
    } else {
      double d = (hi - lo) * 0.05;
      lo -= d;
      hi += d;
    }
  }
};

// Largest {1,2,5}*10^k step giving at most ~6 ticks.
double nice_step(double span) {
  double raw = span / 5.0;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double frac = raw / mag;
  double step = frac <= 1.0 ? 1.0 : frac <= 2.0 ? 2.0 : frac <= 5.0 ? 5.0
                                                                    : 10.0;
  return step * mag;
}

}  // namespace

std::string render_svg_chart(const std::vector<SvgPanel>& panels, int width,
                             int panel_height) {
  if (panels.empty()) throw DomainError("svg chart: no panels");
  const int total_height = panel_height * static_cast<int>(panels.size());
  const double margin_left = 78.0, margin_right = 20.0, margin_top = 34.0,
               margin_bottom = 46.0;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(total_height) +
         "\" viewBox=\"0 0 " + std::to_string(width) + " " +
         std::to_string(total_height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  bool any_point = false;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const SvgPanel& panel = panels[p];
    const double top = static_cast<double>(panel_height) * p;
    const double plot_x0 = margin_left;
    const double plot_x1 = width - margin_right;
    const double plot_y0 = top + margin_top;
    const double plot_y1 = top + panel_height - margin_bottom;

    Range xr, yr;
    for (const SvgSeries& s : panel.series) {
      if (s.x.size() != s.y.size()) {
        throw DomainError("svg chart: series '" + s.label +
                          "' has mismatched x/y lengths");
      }
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
          xr.include(s.x[i]);
          yr.include(s.y[i]);
        }
      }
    }
    if (!xr.valid() || !yr.valid()) {
      svg += "<text x=\"" + fmt2(plot_x0) + "\" y=\"" + fmt2(plot_y0) +
             "\" font-family=\"sans-serif\" font-size=\"13\">" +
             escape(panel.title) + " (no finite data)</text>\n";
      continue;
    }
    any_point = true;
    xr.pad();
    yr.pad();
    auto map_x = [&](double v) {
      return plot_x0 + (v - xr.lo) / (xr.hi - xr.lo) * (plot_x1 - plot_x0);
    };
    auto map_y = [&](double v) {
      return plot_y1 - (v - yr.lo) / (yr.hi - yr.lo) * (plot_y1 - plot_y0);
    };

    svg += "<rect x=\"" + fmt2(plot_x0) + "\" y=\"" + fmt2(plot_y0) +
           "\" width=\"" + fmt2(plot_x1 - plot_x0) + "\" height=\"" +
           fmt2(plot_y1 - plot_y0) +
           "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt2((plot_x0 + plot_x1) / 2.0) + "\" y=\"" +
           fmt2(top + 20.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">" +
           escape(panel.title) + "</text>\n";

    double xstep = nice_step(xr.hi - xr.lo);
    for (double v = std::ceil(xr.lo / xstep) * xstep; v <= xr.hi + 1e-9 * xstep;
         v += xstep) {
      double px = map_x(v);
      svg += "<line x1=\"" + fmt2(px) + "\" y1=\"" + fmt2(plot_y0) +
             "\" x2=\"" + fmt2(px) + "\" y2=\"" + fmt2(plot_y1) +
             "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
      svg += "<text x=\"" + fmt2(px) + "\" y=\"" + fmt2(plot_y1 + 16.0) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"11\">" +
             fmt_tick(v) + "</text>\n";
    }
    double ystep = nice_step(yr.hi - yr.lo);
    for (double v = std::ceil(yr.lo / ystep) * ystep; v <= yr.hi + 1e-9 * ystep;
         v += ystep) {
      double py = map_y(v);
      svg += "<line x1=\"" + fmt2(plot_x0) + "\" y1=\"" + fmt2(py) +
             "\" x2=\"" + fmt2(plot_x1) + "\" y2=\"" + fmt2(py) +
             "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
      svg += "<text x=\"" + fmt2(plot_x0 - 6.0) + "\" y=\"" + fmt2(py + 4.0) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"11\">" +
             fmt_tick(v) + "</text>\n";
    }
    svg += "<text x=\"" + fmt2((plot_x0 + plot_x1) / 2.0) + "\" y=\"" +
           fmt2(plot_y1 + 34.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">" +
           escape(panel.x_label) + "</text>\n";
    svg += "<text x=\"16\" y=\"" + fmt2((plot_y0 + plot_y1) / 2.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\" transform=\"rotate(-90 16 " +
           fmt2((plot_y0 + plot_y1) / 2.0) + ")\">" + escape(panel.y_label) +
           "</text>\n";

    for (std::size_t si = 0; si < panel.series.size(); ++si) {
      const SvgSeries& s = panel.series[si];
      std::string color =
          s.color.empty() ? kPalette[si % kPaletteSize] : s.color;
      std::string dash = s.dashed ? " stroke-dasharray=\"6 4\"" : "";
      std::string points;
      auto flush = [&]() {
        if (!points.empty()) {
          svg += "<polyline fill=\"none\" stroke=\"" + color +
                 "\" stroke-width=\"1.5\"" + dash + " points=\"" + points +
                 "\"/>\n";
          points.clear();
        }
      };
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
          flush();
          continue;
        }
        if (!points.empty()) points += " ";
        points += fmt2(map_x(s.x[i])) + "," + fmt2(map_y(s.y[i]));
      }
      flush();
      // Legend entry, top-right inside the plot.
      double ly = plot_y0 + 16.0 + 16.0 * static_cast<double>(si);
      svg += "<line x1=\"" + fmt2(plot_x1 - 150.0) + "\" y1=\"" + fmt2(ly) +
             "\" x2=\"" + fmt2(plot_x1 - 126.0) + "\" y2=\"" + fmt2(ly) +
             "\" stroke=\"" + color + "\" stroke-width=\"2\"" + dash + "/>\n";
      svg += "<text x=\"" + fmt2(plot_x1 - 120.0) + "\" y=\"" + fmt2(ly + 4.0) +
             "\" font-family=\"sans-serif\" font-size=\"11\">" +
             escape(s.label) + "</text>\n";
    }
  }
  if (!any_point) throw DomainError("svg chart: no finite data points");
  svg += "</svg>\n";
  return svg;
}

}  // namespace collapsim
