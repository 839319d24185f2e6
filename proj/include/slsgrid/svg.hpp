#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "slsgrid/common.hpp"

namespace slsgrid {

inline std::string short_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

/// Minimal static line-plot writer (SVG). Series whose amplitude dwarfs the
/// rest (diverging trajectories) keep their early samples in frame; points
/// outside the chosen range break the polyline rather than rescaling it away.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string x_label, std::string y_label)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    void add_series(std::string name, std::vector<double> x, std::vector<double> y) {
        series_.push_back({std::move(name), std::move(x), std::move(y)});
    }

    void write(std::ostream& os) const {
        const double width = 760, height = 440;
        const double ml = 70, mr = 160, mt = 40, mb = 50;
        const double pw = width - ml - mr, ph = height - mt - mb;

        double x_min = std::numeric_limits<double>::max(), x_max = -x_min;
        for (const auto& s : series_)
            for (double v : s.x) {
                x_min = std::min(x_min, v);
                x_max = std::max(x_max, v);
            }
        auto [y_min, y_max] = y_range();
        if (x_min >= x_max) x_max = x_min + 1.0;
        if (y_min >= y_max) y_max = y_min + 1.0;
        const double y_pad = 0.05 * (y_max - y_min);
        y_min -= y_pad;
        y_max += y_pad;

        auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
        auto py = [&](double y) { return mt + (1.0 - (y - y_min) / (y_max - y_min)) * ph; };

        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
           << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
        os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        os << "<text x=\"" << ml + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" "
           << "font-family=\"sans-serif\" font-size=\"15\">" << title_ << "</text>\n";

        for (int tick = 0; tick <= 5; ++tick) {
            const double fx = x_min + (x_max - x_min) * tick / 5.0;
            const double fy = y_min + (y_max - y_min) * tick / 5.0;
            os << "<line x1=\"" << px(fx) << "\" y1=\"" << mt << "\" x2=\"" << px(fx)
               << "\" y2=\"" << mt + ph << "\" stroke=\"#dddddd\"/>\n";
            os << "<line x1=\"" << ml << "\" y1=\"" << py(fy) << "\" x2=\"" << ml + pw
               << "\" y2=\"" << py(fy) << "\" stroke=\"#dddddd\"/>\n";
            os << "<text x=\"" << px(fx) << "\" y=\"" << mt + ph + 18
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
               << short_num(fx) << "</text>\n";
            os << "<text x=\"" << ml - 6 << "\" y=\"" << py(fy) + 4
               << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
               << short_num(fy) << "</text>\n";
        }
        os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\""
           << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
        os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
           << x_label_ << "</text>\n";
        os << "<text x=\"18\" y=\"" << mt + ph / 2
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           << "transform=\"rotate(-90 18 " << mt + ph / 2 << ")\">" << y_label_ << "</text>\n";

        static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};
        for (size_t si = 0; si < series_.size(); ++si) {
            const auto& s = series_[si];
            const char* color = colors[si % 5];
            std::string path;
            bool open = false;
            for (size_t i = 0; i < s.x.size(); ++i) {
                const double v = s.y[i];
                if (!std::isfinite(v) || v < y_min || v > y_max) {
                    open = false;
                    continue;
                }
                path += (open ? " L" : " M");
                path += std::to_string(px(s.x[i])) + " " + std::to_string(py(v));
                open = true;
            }
            if (!path.empty())
                os << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color
                   << "\" stroke-width=\"1.6\"/>\n";
            const double ly = mt + 18 + 20 * static_cast<double>(si);
            os << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly << "\" x2=\""
               << ml + pw + 40 << "\" y2=\"" << ly << "\" stroke=\"" << color
               << "\" stroke-width=\"2\"/>\n";
            os << "<text x=\"" << ml + pw + 46 << "\" y=\"" << ly + 4
               << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.name << "</text>\n";
        }
        os << "</svg>\n";
    }

private:
    struct Series {
        std::string name;
        std::vector<double> x, y;
    };

    /// Range from the better-behaved series so a diverging one cannot flatten
    /// the rest; its early (in-range) samples still render.
    std::pair<double, double> y_range() const {
        std::vector<double> amplitude;
        for (const auto& s : series_) {
            double a = 0.0;
            for (double v : s.y)
                if (std::isfinite(v)) a = std::max(a, std::abs(v));
            amplitude.push_back(a);
        }
        double tame = std::numeric_limits<double>::max();
        for (double a : amplitude)
            if (a > 0.0) tame = std::min(tame, a);
        if (tame == std::numeric_limits<double>::max()) tame = 1.0;
        double lo = std::numeric_limits<double>::max(), hi = -lo;
        for (size_t si = 0; si < series_.size(); ++si) {
            if (amplitude[si] > 50.0 * tame) continue;
            for (double v : series_[si].y) {
                if (!std::isfinite(v)) continue;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        if (lo > hi) {
            lo = -tame;
            hi = tame;
        }
        return {lo, hi};
    }

    std::string title_, x_label_, y_label_;
    std::vector<Series> series_;
};

}  // namespace slsgrid
