#pragma once

#include "vitclust/matrix.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vitclust::metrics {

/// Per-point silhouette. a = mean distance to the rest of the point's
/// cluster, b = smallest mean distance to another cluster, s = (b-a)/max(a,b).
/// Members of singleton clusters score 0. Throws MetricError for fewer than
/// two clusters or fewer than three points.
std::vector<double> silhouette_samples(const MatrixD& points, const Labels& labels);

/// Mean of silhouette_samples (exact, O(n^2)).
double silhouette(const MatrixD& points, const Labels& labels);

/// Mean silhouette over a seeded uniform subset of `sample_size` points;
/// each sampled point still compares against every row.
double silhouette_subsampled(const MatrixD& points, const Labels& labels, std::size_t sample_size,
                             std::uint64_t seed);

/// [B/(k-1)] / [W/(n-k)]. Returns +infinity when W = 0. Throws MetricError
/// unless 2 <= k < n.
double calinski_harabasz(const MatrixD& points, const Labels& labels);

/// mean_i max_{j != i} (s_i + s_j) / |mu_i - mu_j|, s_i the mean distance
/// of cluster i to its centroid. Throws CoincidentCentroids naming the pair.
double davies_bouldin(const MatrixD& points, const Labels& labels);

struct SilhouetteMode {
    /// 0 = exact; otherwise the subsample size used when n exceeds it.
    std::size_t sample_size = 0;
    std::uint64_t seed = 42;

    std::string describe(std::size_t n) const;
};

struct MetricsRow {
    int dim = 0;
    double silhouette = 0.0;
    double calinski_harabasz = 0.0;
    double davies_bouldin = 0.0;
    std::string silhouette_mode = "exact";
    std::optional<std::string> error;  // set when this row could not be scored
};

struct LabeledProjection {
    MatrixD points;
    Labels labels;
};

/// One row per dim in ascending order. A failing row carries its error text
/// and does not stop the others.
std::vector<MetricsRow> metrics_table(const std::map<int, LabeledProjection>& by_dim, SilhouetteMode mode = {});

/// Index of the row with the highest silhouette among rows without errors.
std::optional<std::size_t> best_silhouette_row(const std::vector<MetricsRow>& rows);

/// Compact score renderings: silhouette ".0126" (4 places, no leading
/// zero), C-H "925.5", D-B "4.412"; infinities render as "inf".
std::string format_silhouette(double v);
std::string format_ch(double v);
std::string format_db(double v);

/// Right-aligned plain-text table with columns Dim. / Silhouette / C-H / D-B.
/// With mark_best, the best-silhouette row gets a trailing " *" and a
/// footnote line is appended.
std::string format_table(const std::vector<MetricsRow>& rows, bool mark_best = true);

std::string table_to_json(const std::vector<MetricsRow>& rows);

}  // namespace vitclust::metrics
