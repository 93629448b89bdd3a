#pragma once

#include <string>
#include <vector>

namespace collapsim {

// Minimal deterministic SVG line charts. Presentation-only: nothing beyond
// well-formedness is promised.

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  // NaN entries break the polyline
  std::string color;      // empty = palette color by index
  bool dashed = false;
};

struct SvgPanel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
};

// Panels stack vertically in one document. Throws DomainError when a series
// has mismatched x/y lengths or no panel has a finite point.
std::string render_svg_chart(const std::vector<SvgPanel>& panels,
                             int width = 880, int panel_height = 320);

}  // namespace collapsim
