#pragma once

#include <string>
#include <utility>
#include <vector>

namespace tirbench {

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log2_x = false;
    double y_min = 0.0;
    double y_max = 100.0;
    int width = 640;
    int height = 400;
};

/// Standalone SVG line chart with a legend. Output depends only on the inputs.
std::string line_chart(const PlotSpec& spec, const std::vector<PlotSeries>& series);

}  // namespace tirbench
