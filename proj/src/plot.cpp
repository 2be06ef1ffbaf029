#include "tirbench/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace tirbench {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string escape(std::string_view s) {
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

std::string tick_label(double v) {
    if (std::fabs(v - std::round(v)) < 1e-9) return fmt::format("{}", static_cast<long long>(std::llround(v)));
    return fmt::format("{:.2g}", v);
}

}  // namespace

std::string line_chart(const PlotSpec& spec, const std::vector<PlotSeries>& series) {
    const double left = 64, right = 160, top = 40, bottom = 56;
    const double w = spec.width - left - right;
    const double h = spec.height - top - bottom;

    auto xv = [&](double x) { return spec.log2_x ? std::log2(std::max(x, 1e-300)) : x; };
    double x_lo = std::numeric_limits<double>::infinity();
    double x_hi = -x_lo;
    std::vector<double> xs;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            x_lo = std::min(x_lo, xv(x));
            x_hi = std::max(x_hi, xv(x));
            xs.push_back(x);
        }
    }
    if (xs.empty()) {
        x_lo = 0;
        x_hi = 1;
    }
    if (x_hi <= x_lo) x_hi = x_lo + 1;
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    const double y_span = spec.y_max > spec.y_min ? spec.y_max - spec.y_min : 1.0;

    auto px = [&](double x) { return left + (xv(x) - x_lo) / (x_hi - x_lo) * w; };
    auto py = [&](double y) { return top + (1.0 - (std::clamp(y, spec.y_min, spec.y_max) - spec.y_min) / y_span) * h; };

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n",
        spec.width, spec.height, spec.width, spec.height);
    svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", spec.width, spec.height);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                       left + w / 2, escape(spec.title));

    // Grid and ticks.
    for (int k = 0; k <= 5; ++k) {
        const double y = spec.y_min + y_span * k / 5.0;
        svg += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>\n", left,
                           py(y), left + w, py(y));
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{}</text>\n", left - 6, py(y) + 4,
                           tick_label(y));
    }
    for (double x : xs) {
        svg += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#eee\"/>\n", px(x),
                           top, px(x), top + h);
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", px(x), top + h + 16,
                           tick_label(x));
    }
    svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
                       "stroke=\"#333\"/>\n",
                       left, top, w, h);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", left + w / 2,
                       top + h + 40, escape(spec.x_label));
    svg += fmt::format("<text x=\"16\" y=\"{:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2f})\">{}</text>\n",
                       top + h / 2, top + h / 2, escape(spec.y_label));

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto* color = kPalette[i % std::size(kPalette)];
        std::string pts;
        for (const auto& [x, y] : series[i].points) pts += fmt::format("{}{:.2f},{:.2f}", pts.empty() ? "" : " ", px(x), py(y));
        svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color, pts);
        for (const auto& [x, y] : series[i].points) {
            svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(x), py(y), color);
        }
        const double ly = top + 12 + 18.0 * static_cast<double>(i);
        svg += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" "
                           "stroke-width=\"2\"/>\n",
                           left + w + 12, ly, left + w + 32, ly, color);
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", left + w + 38, ly + 4,
                           escape(series[i].name));
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace tirbench
