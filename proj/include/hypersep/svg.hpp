#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hypersep/core.hpp"
#include "hypersep/engine.hpp"

namespace hypersep {

namespace svg_detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline const char* label_color(const std::string& label) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    std::size_t h = 0;
    for (char c : label) h = h * 131 + static_cast<unsigned char>(c);
    return palette[h % (sizeof palette / sizeof palette[0])];
}

/// Intersect constant + a*x + b*y = 0 with a bounding box; returns the two
/// clip endpoints when the line crosses it.
inline bool clip_line(double constant, double a, double b, double x0, double y0,
                      double x1, double y1, double out[4]) {
    std::vector<std::pair<double, double>> hits;
    auto add = [&](double x, double y) {
        const double slack = 1e-9 * (std::abs(x1 - x0) + std::abs(y1 - y0));
        if (x < x0 - slack || x > x1 + slack || y < y0 - slack || y > y1 + slack) return;
        for (const auto& h : hits) {
            if (std::abs(h.first - x) < slack && std::abs(h.second - y) < slack) return;
        }
        hits.emplace_back(x, y);
    };
    if (std::abs(b) > 1e-300) {
        add(x0, -(constant + a * x0) / b);
        add(x1, -(constant + a * x1) / b);
    }
    if (std::abs(a) > 1e-300) {
        add(-(constant + b * y0) / a, y0);
        add(-(constant + b * y1) / a, y1);
    }
    if (hits.size() < 2) return false;
    out[0] = hits[0].first;
    out[1] = hits[0].second;
    out[2] = hits[1].first;
    out[3] = hits[1].second;
    return true;
}

}  // namespace svg_detail

/// 2-D diagnostic plot: labelled points, one line per plane, and a short
/// arrow from each line along its positive normal.
inline std::string state_to_svg(const separation_state<double>& state) {
    if (state.dimension != 2) {
        throw usage_error("plotting requires a 2-D state");
    }
    using svg_detail::num;

    double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
    bool first = true;
    auto grow = [&](const point<double>& p) {
        if (first) {
            x0 = x1 = p.coords[0];
            y0 = y1 = p.coords[1];
            first = false;
        } else {
            x0 = std::min(x0, p.coords[0]);
            x1 = std::max(x1, p.coords[0]);
            y0 = std::min(y0, p.coords[1]);
            y1 = std::max(y1, p.coords[1]);
        }
    };
    for (const auto& entry : state.s_points) grow(entry.pt);
    for (const auto& pair : state.pending) {
        grow(pair.first);
        if (pair.second) grow(*pair.second);
        if (pair.third) grow(*pair.third);
    }
    const double margin = 0.15 * std::max({x1 - x0, y1 - y0, 1.0});
    x0 -= margin;
    y0 -= margin;
    x1 += margin;
    y1 += margin;

    const double view = 800.0;
    const double sx = view / (x1 - x0);
    const double sy = view / (y1 - y0);
    auto X = [&](double x) { return (x - x0) * sx; };
    auto Y = [&](double y) { return view - (y - y0) * sy; };  // flip y

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" "
           "viewBox=\"0 0 800 800\">\n";
    out += "<rect width=\"800\" height=\"800\" fill=\"white\"/>\n";

    for (const auto& plane : state.planes) {
        double seg[4];
        if (!svg_detail::clip_line(plane.constant, plane.coeffs[0], plane.coeffs[1],
                                   x0, y0, x1, y1, seg)) {
            continue;
        }
        out += "<line x1=\"" + num(X(seg[0])) + "\" y1=\"" + num(Y(seg[1])) +
               "\" x2=\"" + num(X(seg[2])) + "\" y2=\"" + num(Y(seg[3])) +
               "\" stroke=\"#444\" stroke-width=\"1\"/>\n";

        // normal arrow from the segment middle toward the positive side
        const double mx = 0.5 * (seg[0] + seg[2]);
        const double my = 0.5 * (seg[1] + seg[3]);
        const double norm = std::hypot(plane.coeffs[0], plane.coeffs[1]);
        if (norm > 1e-300) {
            const double ax = plane.coeffs[0] / norm;
            const double ay = plane.coeffs[1] / norm;
            const double len = 0.05 * std::max(x1 - x0, y1 - y0);
            out += "<line class=\"normal\" x1=\"" + num(X(mx)) + "\" y1=\"" +
                   num(Y(my)) + "\" x2=\"" + num(X(mx + ax * len)) + "\" y2=\"" +
                   num(Y(my + ay * len)) +
                   "\" stroke=\"black\" stroke-width=\"2\" marker-end=\"url(#tip)\"/>\n";
        }
        out += "<text x=\"" + num(X(mx) + 4) + "\" y=\"" + num(Y(my) - 4) +
               "\" font-size=\"12\" fill=\"#444\">" + std::to_string(plane.index + 1) +
               "</text>\n";
    }

    out += "<defs><marker id=\"tip\" markerWidth=\"8\" markerHeight=\"8\" refX=\"6\" "
           "refY=\"3\" orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"black\"/>"
           "</marker></defs>\n";

    for (const auto& entry : state.s_points) {
        const auto& p = entry.pt;
        out += "<circle cx=\"" + num(X(p.coords[0])) + "\" cy=\"" +
               num(Y(p.coords[1])) + "\" r=\"4\" fill=\"" +
               svg_detail::label_color(p.label) + "\"/>\n";
        out += "<text x=\"" + num(X(p.coords[0]) + 6) + "\" y=\"" +
               num(Y(p.coords[1]) + 4) + "\" font-size=\"11\">" + p.label +
               std::to_string(p.id) + "</text>\n";
    }

    out += "</svg>\n";
    return out;
}

inline void save_svg(const separation_state<double>& state, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open " + path + " for writing");
    out << state_to_svg(state);
}

}  // namespace hypersep
