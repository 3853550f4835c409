#include "vitclust/scatter_plot.hpp"

#include "vitclust/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace vitclust::pipeline {

namespace {

constexpr const char* kBasePalette[] = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
};

std::string hsl_hex(double hue, double sat, double light) {
    const double c = (1.0 - std::abs(2.0 * light - 1.0)) * sat;
    const double h = hue / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (h < 1) { r = c; g = x; }
    else if (h < 2) { r = x; g = c; }
    else if (h < 3) { g = c; b = x; }
    else if (h < 4) { g = x; b = c; }
    else if (h < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = light - c / 2.0;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround((r + m) * 255)),
                  static_cast<int>(std::lround((g + m) * 255)), static_cast<int>(std::lround((b + m) * 255)));
    return buf;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

}  // namespace

std::vector<std::string> default_palette(std::size_t k) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) {
        if (i < std::size(kBasePalette)) {
            out.emplace_back(kBasePalette[i]);
        } else {
            const std::size_t extra = i - std::size(kBasePalette);
            out.push_back(hsl_hex(std::fmod(extra * 137.508, 360.0), 0.65, 0.5));
        }
    }
    return out;
}

std::string render_scatter_svg(const ScatterSpec& spec) {
    if (spec.points.cols() != 2) {
        throw DimensionError("scatter plots need a 2-D projection, got " + std::to_string(spec.points.cols()) + " columns");
    }
    const auto n = static_cast<std::size_t>(spec.points.rows());
    if (spec.labels.size() != n) {
        throw AlignmentError("have " + std::to_string(spec.labels.size()) + " labels for " + std::to_string(n) + " points");
    }
    if (!spec.record_ids.empty() && spec.record_ids.size() != n) {
        throw AlignmentError("record id list does not match the projection rows");
    }

    std::map<int, std::size_t> sizes;
    for (int l : spec.labels) ++sizes[l];
    std::map<int, std::size_t> slot;
    for (const auto& [label, count] : sizes) slot.emplace(label, slot.size());
    const std::vector<std::string> palette = spec.palette.empty() ? default_palette(sizes.size()) : spec.palette;
    if (palette.size() < sizes.size()) {
        throw ConfigError("palette has " + std::to_string(palette.size()) + " colors for " +
                          std::to_string(sizes.size()) + " clusters");
    }

    const double legend_width = sizes.empty() ? 0.0 : 170.0;
    const double margin = 40.0;
    const double plot_w = spec.width - legend_width - 2 * margin;
    const double plot_h = spec.height - 2 * margin - 20.0;
    const double top = margin + 20.0;

    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    if (n > 0) {
        min_x = spec.points.col(0).minCoeff();
        max_x = spec.points.col(0).maxCoeff();
        min_y = spec.points.col(1).minCoeff();
        max_y = spec.points.col(1).maxCoeff();
    }
    auto to_px = [&](double v, double lo, double hi, double extent) {
        return hi > lo ? (v - lo) / (hi - lo) * extent : extent / 2.0;
    };

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) + "\" height=\"" +
           std::to_string(spec.height) + "\" viewBox=\"0 0 " + std::to_string(spec.width) + " " +
           std::to_string(spec.height) + "\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(spec.width) + "\" height=\"" + std::to_string(spec.height) +
           "\" fill=\"#ffffff\"/>\n";
    svg += "<text x=\"" + num(margin) + "\" y=\"" + num(margin) + "\" font-family=\"sans-serif\" font-size=\"16\">" +
           escape(spec.title) + "</text>\n";
    svg += "<rect class=\"frame\" x=\"" + num(margin) + "\" y=\"" + num(top) + "\" width=\"" + num(plot_w) +
           "\" height=\"" + num(plot_h) + "\" fill=\"none\" stroke=\"#cccccc\"/>\n";

    svg += "<g class=\"markers\">\n";
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double cx = margin + to_px(spec.points(row, 0), min_x, max_x, plot_w);
        // SVG y grows downward
        const double cy = top + plot_h - to_px(spec.points(row, 1), min_y, max_y, plot_h);
        const std::int64_t id = spec.record_ids.empty() ? static_cast<std::int64_t>(i) : spec.record_ids[i];
        const int label = spec.labels[i];
        svg += "<circle class=\"marker\" data-record-id=\"" + std::to_string(id) + "\" data-cluster=\"" +
               std::to_string(label) + "\" cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(spec.point_radius) +
               "\" fill=\"" + palette[slot.at(label)] + "\" fill-opacity=\"0.8\"/>\n";
        if (spec.highlight.count(id)) {
            svg += "<circle class=\"highlight\" data-record-id=\"" + std::to_string(id) + "\" cx=\"" + num(cx) +
                   "\" cy=\"" + num(cy) + "\" r=\"" + num(spec.point_radius + 3.0) +
                   "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1.5\"/>\n";
        }
    }
    svg += "</g>\n";

    if (!sizes.empty()) {
        const double lx = spec.width - legend_width - margin / 2.0 + 10.0;
        svg += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
        double ly = top + 10.0;
        for (const auto& [label, count] : sizes) {
            svg += "<g class=\"legend-entry\" data-cluster=\"" + std::to_string(label) + "\"><circle cx=\"" + num(lx) +
                   "\" cy=\"" + num(ly) + "\" r=\"5.00\" fill=\"" + palette[slot.at(label)] + "\"/><text x=\"" +
                   num(lx + 12.0) + "\" y=\"" + num(ly + 4.0) + "\">cluster " + std::to_string(label) + " (n=" +
                   std::to_string(count) + ")</text></g>\n";
            ly += 18.0;
        }
        svg += "</g>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace vitclust::pipeline
