#pragma once

#include "vitclust/matrix.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace vitclust::pipeline {

struct ScatterSpec {
    MatrixD points;                         // n x 2
    Labels labels;                          // cluster per row
    std::vector<std::int64_t> record_ids;   // per row; defaults to row index when empty
    double point_radius = 3.0;
    std::vector<std::string> palette;       // empty: default_palette(k)
    int width = 900;
    int height = 700;
    std::set<std::int64_t> highlight;       // drawn with an outline ring
    std::string title = "UMAP projection colored by cluster";
};

/// 20 hand-picked colors, extended with evenly spaced hues beyond that.
std::vector<std::string> default_palette(std::size_t k);

/// Deterministic SVG: one <circle class="marker"> per point, colored by
/// cluster, and a legend entry per cluster with its size (omitted when
/// there are no points). Throws DimensionError unless points has 2 columns
/// and ConfigError when the palette has fewer than k colors.
std::string render_scatter_svg(const ScatterSpec& spec);

}  // namespace vitclust::pipeline
