#pragma once

#include <string>
#include <vector>

namespace crossdiff {

/// Minimal static line-plot writer (no external plotting dependency).
struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series);

}  // namespace crossdiff
