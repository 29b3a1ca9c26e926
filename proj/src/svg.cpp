#include "pblab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace pblab {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 36, kBottom = 50;

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (lo > hi) { lo = 0.0; hi = 1.0; }
        if (lo == hi) { lo -= 0.5; hi += 0.5; }
        const double m = 0.04 * (hi - lo);
        lo -= m;
        hi += m;
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

void write_svg_plot(const SvgPlot& plot, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");

    auto tx = [&](double x) { return plot.log_x ? std::log10(std::max(x, 1e-300)) : x; };

    Range xr, yr;
    for (const auto& s : plot.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xr.add(tx(s.x[i]));
            yr.add(s.y[i] - (i < s.yerr.size() ? s.yerr[i] : 0.0));
            yr.add(s.y[i] + (i < s.yerr.size() ? s.yerr[i] : 0.0));
        }
    xr.pad();
    yr.pad();

    auto px = [&](double x) { return kLeft + (tx(x) - xr.lo) / (xr.hi - xr.lo) * (kWidth - kLeft - kRight); };
    auto py = [&](double y) { return kHeight - kBottom - (y - yr.lo) / (yr.hi - yr.lo) * (kHeight - kTop - kBottom); };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
       << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       << plot.title << "</text>\n";

    // axes
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
       << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
       << kHeight - kBottom << "\" stroke=\"black\"/>\n";

    const int ticks = 5;
    for (int i = 0; i <= ticks; ++i) {
        const double fx = xr.lo + (xr.hi - xr.lo) * i / ticks;
        const double fy = yr.lo + (yr.hi - yr.lo) * i / ticks;
        const double x = kLeft + (kWidth - kLeft - kRight) * i / ticks;
        const double y = kHeight - kBottom - (kHeight - kTop - kBottom) * i / ticks;
        os << "<line x1=\"" << x << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << x << "\" y2=\""
           << kHeight - kBottom + 4 << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << x << "\" y=\"" << kHeight - kBottom + 18
           << "\" text-anchor=\"middle\" font-size=\"11\">"
           << (plot.log_x ? "1e" + fmt(fx) : fmt(fx)) << "</text>\n";
        os << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4
           << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(fy) << "</text>\n";
    }
    os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12
       << "\" text-anchor=\"middle\" font-size=\"12\">" << plot.x_label << "</text>\n";
    os << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
       << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
       << (kTop + kHeight - kBottom) / 2 << ")\">" << plot.y_label << "</text>\n";

    double legend_y = kTop + 6;
    for (const auto& s : plot.series) {
        if (!s.x.empty()) {
            std::string points;
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                points += fmt(px(s.x[i]));
                points += ',';
                points += fmt(py(s.y[i]));
                points += ' ';
            }
            os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\""
               << points << "\"/>\n";
            for (std::size_t i = 0; i < s.yerr.size() && i < s.x.size(); ++i) {
                os << "<line x1=\"" << fmt(px(s.x[i])) << "\" y1=\"" << fmt(py(s.y[i] - s.yerr[i]))
                   << "\" x2=\"" << fmt(px(s.x[i])) << "\" y2=\"" << fmt(py(s.y[i] + s.yerr[i]))
                   << "\" stroke=\"" << s.color << "\"/>\n";
            }
            if (s.markers)
                for (std::size_t i = 0; i < s.x.size(); ++i)
                    os << "<circle cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i]))
                       << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
        }
        os << "<rect x=\"" << kWidth - kRight - 150 << "\" y=\"" << legend_y - 8
           << "\" width=\"14\" height=\"3\" fill=\"" << s.color << "\"/>\n";
        os << "<text x=\"" << kWidth - kRight - 132 << "\" y=\"" << legend_y
           << "\" font-size=\"11\">" << s.label << "</text>\n";
        legend_y += 14;
    }
    os << "</svg>\n";
}

} // namespace pblab
