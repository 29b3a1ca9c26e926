#pragma once

#include <string>
#include <vector>

namespace pblab {

// Minimal static line-plot writer: axes, ticks, polylines, optional
// point markers with vertical error bars, optional log10 x scale.
struct SvgSeries {
    std::string label;
    std::string color;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> yerr; // empty, or one half-width per point
    bool markers = false;
};

struct SvgPlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    std::vector<SvgSeries> series;
};

void write_svg_plot(const SvgPlot& plot, const std::string& path);

} // namespace pblab
