#include "vitclust/quality_metrics.hpp"

#include "vitclust/error.hpp"
#include "vitclust/parallel.hpp"
#include "vitclust/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace vitclust::metrics {

namespace {

/// Labels remapped to 0..k-1 in ascending order of the original values.
struct Compact {
    std::vector<int> ids;
    std::vector<int> original;  // compact id -> original label
    std::vector<std::size_t> sizes;

    int k() const { return static_cast<int>(original.size()); }
};

Compact compact(const MatrixD& points, const Labels& labels) {
    if (static_cast<std::size_t>(points.rows()) != labels.size()) {
        throw MetricError("have " + std::to_string(labels.size()) + " labels for " + std::to_string(points.rows()) +
                          " points");
    }
    Compact c;
    c.original = labels;
    std::sort(c.original.begin(), c.original.end());
    c.original.erase(std::unique(c.original.begin(), c.original.end()), c.original.end());
    c.ids.resize(labels.size());
    c.sizes.assign(c.original.size(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        c.ids[i] = static_cast<int>(std::lower_bound(c.original.begin(), c.original.end(), labels[i]) - c.original.begin());
        ++c.sizes[c.ids[i]];
    }
    return c;
}

MatrixD centroids_of(const MatrixD& points, const Compact& c) {
    MatrixD mu = MatrixD::Zero(c.k(), points.cols());
    for (std::size_t i = 0; i < c.ids.size(); ++i) mu.row(c.ids[i]) += points.row(static_cast<Eigen::Index>(i));
    for (int j = 0; j < c.k(); ++j) mu.row(j) /= static_cast<double>(c.sizes[j]);
    return mu;
}

double point_silhouette(const MatrixD& points, const Compact& c, std::size_t i, std::vector<double>& sums) {
    const int own = c.ids[i];
    if (c.sizes[own] == 1) return 0.0;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < c.ids.size(); ++j) {
        if (j == i) continue;
        sums[c.ids[j]] += (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm();
    }
    const double a = sums[own] / static_cast<double>(c.sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int q = 0; q < c.k(); ++q) {
        if (q != own) b = std::min(b, sums[q] / static_cast<double>(c.sizes[q]));
    }
    const double denom = std::max(a, b);
    return denom > 0.0 ? (b - a) / denom : 0.0;
}

Compact silhouette_inputs(const MatrixD& points, const Labels& labels) {
    Compact c = compact(points, labels);
    if (points.rows() < 3) throw MetricError("silhouette needs at least 3 points");
    if (c.k() < 2) throw MetricError("silhouette needs at least 2 clusters, got " + std::to_string(c.k()));
    return c;
}

double ordered_mean(const std::vector<double>& v) {
    double total = 0.0;
    for (double x : v) total += x;
    return v.empty() ? 0.0 : total / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> silhouette_samples(const MatrixD& points, const Labels& labels) {
    const Compact c = silhouette_inputs(points, labels);
    std::vector<double> scores(labels.size());
    parallel_for(scores.size(), [&](std::size_t begin, std::size_t end) {
        std::vector<double> sums(c.k());
        for (std::size_t i = begin; i < end; ++i) scores[i] = point_silhouette(points, c, i, sums);
    });
    return scores;
}

double silhouette(const MatrixD& points, const Labels& labels) {
    return ordered_mean(silhouette_samples(points, labels));
}

double silhouette_subsampled(const MatrixD& points, const Labels& labels, std::size_t sample_size, std::uint64_t seed) {
    const Compact c = silhouette_inputs(points, labels);
    const std::size_t n = labels.size();
    if (sample_size == 0 || sample_size >= n) return silhouette(points, labels);

    // Partial Fisher-Yates, then sorted so the reduction order is fixed.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = 0; i < sample_size; ++i) {
        std::swap(order[i], order[i + uniform_index(rng, n - i)]);
    }
    order.resize(sample_size);
    std::sort(order.begin(), order.end());

    std::vector<double> scores(sample_size);
    parallel_for(sample_size, [&](std::size_t begin, std::size_t end) {
        std::vector<double> sums(c.k());
        for (std::size_t s = begin; s < end; ++s) scores[s] = point_silhouette(points, c, order[s], sums);
    });
    return ordered_mean(scores);
}

double calinski_harabasz(const MatrixD& points, const Labels& labels) {
    const Compact c = compact(points, labels);
    const auto n = static_cast<std::size_t>(points.rows());
    const auto k = static_cast<std::size_t>(c.k());
    if (k < 2 || k >= n) {
        throw MetricError("Calinski-Harabasz needs 2 <= k < n, got k=" + std::to_string(k) + ", n=" + std::to_string(n));
    }
    const MatrixD mu = centroids_of(points, c);
    const Eigen::RowVectorXd overall = points.colwise().mean();
    double between = 0.0;
    for (std::size_t j = 0; j < k; ++j) between += static_cast<double>(c.sizes[j]) * (mu.row(j) - overall).squaredNorm();
    double within = 0.0;
    for (std::size_t i = 0; i < n; ++i) within += (points.row(static_cast<Eigen::Index>(i)) - mu.row(c.ids[i])).squaredNorm();
    if (within == 0.0) return std::numeric_limits<double>::infinity();
    return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

double davies_bouldin(const MatrixD& points, const Labels& labels) {
    const Compact c = compact(points, labels);
    const int k = c.k();
    if (k < 2) throw MetricError("Davies-Bouldin needs at least 2 clusters, got " + std::to_string(k));
    const MatrixD mu = centroids_of(points, c);
    std::vector<double> scatter(k, 0.0);
    for (std::size_t i = 0; i < c.ids.size(); ++i) {
        scatter[c.ids[i]] += (points.row(static_cast<Eigen::Index>(i)) - mu.row(c.ids[i])).norm();
    }
    for (int j = 0; j < k; ++j) scatter[j] /= static_cast<double>(c.sizes[j]);

    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        double worst = 0.0;
        for (int j = 0; j < k; ++j) {
            if (j == i) continue;
            const double separation = (mu.row(i) - mu.row(j)).norm();
            if (separation == 0.0) {
                const int lo = std::min(c.original[i], c.original[j]);
                const int hi = std::max(c.original[i], c.original[j]);
                throw CoincidentCentroids("clusters " + std::to_string(lo) + " and " + std::to_string(hi) +
                                          " have coincident centroids");
            }
            worst = std::max(worst, (scatter[i] + scatter[j]) / separation);
        }
        total += worst;
    }
    return total / k;
}

std::string SilhouetteMode::describe(std::size_t n) const {
    if (sample_size == 0 || sample_size >= n) return "exact";
    return "subsampled(" + std::to_string(sample_size) + ",seed=" + std::to_string(seed) + ")";
}

std::vector<MetricsRow> metrics_table(const std::map<int, LabeledProjection>& by_dim, SilhouetteMode mode) {
    std::vector<MetricsRow> rows;
    for (const auto& [dim, entry] : by_dim) {
        MetricsRow row;
        row.dim = dim;
        row.silhouette_mode = mode.describe(entry.labels.size());
        try {
            row.silhouette = mode.sample_size == 0 ? silhouette(entry.points, entry.labels)
                                                   : silhouette_subsampled(entry.points, entry.labels, mode.sample_size,
                                                                           mode.seed);
            row.calinski_harabasz = calinski_harabasz(entry.points, entry.labels);
            row.davies_bouldin = davies_bouldin(entry.points, entry.labels);
        } catch (const Error& e) {
            row.error = e.kind() + ": " + e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::optional<std::size_t> best_silhouette_row(const std::vector<MetricsRow>& rows) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].error) continue;
        if (!best || rows[i].silhouette > rows[*best].silhouette) best = i;
    }
    return best;
}

namespace {

std::string printf_fixed(double v, int places) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", places, v);
    return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string format_silhouette(double v) {
    std::string s = printf_fixed(v, 4);
    if (s.rfind("0.", 0) == 0) {
        s.erase(0, 1);
    } else if (s.rfind("-0.", 0) == 0) {
        s.erase(1, 1);
    }
    if (s == "-.0000") s = ".0000";
    return s;
}

std::string format_ch(double v) { return printf_fixed(v, 1); }

std::string format_db(double v) { return printf_fixed(v, 3); }

std::string format_table(const std::vector<MetricsRow>& rows, bool mark_best) {
    const std::vector<std::string> headers = {"Dim.", "Silhouette", "C-H", "D-B"};
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        if (r.error) {
            cells.push_back({std::to_string(r.dim), "-", "-", "-"});
        } else {
            cells.push_back({std::to_string(r.dim), format_silhouette(r.silhouette), format_ch(r.calinski_harabasz),
                             format_db(r.davies_bouldin)});
        }
    }
    std::vector<std::size_t> width(headers.size());
    for (std::size_t c = 0; c < headers.size(); ++c) {
        width[c] = headers[c].size();
        for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
    }
    auto render = [&](const std::vector<std::string>& row) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) line += "  ";
            line += pad_left(row[c], width[c]);
        }
        return line;
    };

    const auto best = mark_best ? best_silhouette_row(rows) : std::nullopt;
    std::string out = render(headers) + "\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out += render(cells[i]);
        if (best && *best == i) out += " *";
        if (rows[i].error) out += "  (" + *rows[i].error + ")";
        out += "\n";
    }
    if (best) out += "* best silhouette\n";
    return out;
}

std::string table_to_json(const std::vector<MetricsRow>& rows) {
    auto number = [](double v) -> nlohmann::ordered_json {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        return v;
    };
    const auto best = best_silhouette_row(rows);
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        nlohmann::ordered_json e;
        e["dim"] = r.dim;
        if (r.error) {
            e["error"] = *r.error;
        } else {
            e["silhouette"] = r.silhouette;
            e["calinski_harabasz"] = number(r.calinski_harabasz);
            e["davies_bouldin"] = r.davies_bouldin;
        }
        e["silhouette_mode"] = r.silhouette_mode;
        e["best"] = best && *best == i;
        j.push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

}  // namespace vitclust::metrics
