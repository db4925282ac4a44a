#pragma once

#include <string>
#include <vector>

namespace perchom {

// Deterministic SVG emitters: no timestamps, fixed formatting.

struct SvgSeries {
    std::string label;
    std::string color = "#1f6fb2";
    std::vector<double> x, y;
};

std::string svg_line_chart(const std::string& title,
                           const std::vector<SvgSeries>& series, bool log_x,
                           bool log_y);

// Heat map over a rows x cols grid (row-major values); blue-to-red ramp,
// one rect per cell.
std::string svg_heat_map(const std::string& title, const std::vector<double>& values,
                         int rows, int cols);

} // namespace perchom
