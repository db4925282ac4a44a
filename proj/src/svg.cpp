#include "perchom/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace perchom {

namespace {

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string ramp_color(double u) {
    // Piecewise blue -> teal -> yellow -> red.
    u = std::clamp(u, 0.0, 1.0);
    const double stops[4][3] = {
        {0.19, 0.21, 0.58}, {0.13, 0.57, 0.55}, {0.99, 0.91, 0.14}, {0.84, 0.16, 0.16}};
    const double x = u * 3.0;
    const int i = std::min(2, static_cast<int>(x));
    const double f = x - i;
    char buf[8];
    std::string out = "#";
    for (int c = 0; c < 3; ++c) {
        const int v = static_cast<int>(
            255.0 * (stops[i][c] * (1 - f) + stops[i + 1][c] * f) + 0.5);
        std::snprintf(buf, sizeof buf, "%02x", std::clamp(v, 0, 255));
        out += buf;
    }
    return out;
}

} // namespace

std::string svg_line_chart(const std::string& title,
                           const std::vector<SvgSeries>& series, bool log_x,
                           bool log_y) {
    const double W = 640, H = 480, ml = 70, mr = 20, mt = 40, mb = 50;

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, tx(s.x[i]));
            xmax = std::max(xmax, tx(s.x[i]));
            ymin = std::min(ymin, ty(s.y[i]));
            ymax = std::max(ymax, ty(s.y[i]));
        }
    if (xmin > xmax) { xmin = 0; xmax = 1; }
    if (ymin > ymax) { ymin = 0; ymax = 1; }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    auto px = [&](double v) { return ml + (tx(v) - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double v) { return H - mb - (ty(v) - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
       << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr
       << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
       << H - mb << "\" stroke=\"black\"/>\n";

    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        const double gx = ml + (W - ml - mr) * i / 4.0;
        const double gy = H - mb - (H - mt - mb) * i / 4.0;
        os << "<text x=\"" << gx << "\" y=\"" << H - mb + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
              "font-size=\"11\">"
           << num(log_x ? std::pow(10.0, fx) : fx) << "</text>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << gy + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
           << num(log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
    }

    double legend_y = mt + 6;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color
           << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            os << num(px(s.x[i])) << "," << num(py(s.y[i])) << " ";
        os << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            os << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\""
               << num(py(s.y[i])) << "\" r=\"2.5\" fill=\"" << s.color << "\"/>\n";
        if (!s.label.empty()) {
            os << "<text x=\"" << W - mr - 6 << "\" y=\"" << legend_y
               << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
                  "font-size=\"12\" fill=\"" << s.color << "\">" << s.label
               << "</text>\n";
            legend_y += 16;
        }
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_heat_map(const std::string& title, const std::vector<double>& values,
                         int rows, int cols) {
    double lo = 1e300, hi = -1e300;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo > hi) { lo = 0; hi = 1; }
    if (hi == lo) hi = lo + 1;

    const double cell = std::max(1.0, std::floor(560.0 / std::max(rows, cols)));
    const double W = cols * cell + 40, H = rows * cell + 60;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
       << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double v = values[static_cast<std::size_t>(r) *
                                        static_cast<std::size_t>(cols) +
                                    static_cast<std::size_t>(c)];
            os << "<rect x=\"" << 20 + c * cell << "\" y=\"" << 40 + r * cell
               << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
               << ramp_color((v - lo) / (hi - lo)) << "\"/>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace perchom
