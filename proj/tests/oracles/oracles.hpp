// Reference implementations for tests only. Written as plain loops over
// std::vector so they share no code paths with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <vector>

namespace oracle {

using Points = std::vector<std::vector<double>>;

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

inline double dist(const std::vector<double>& a, const std::vector<double>& b) { return std::sqrt(sqdist(a, b)); }

inline std::vector<int> distinct_labels(const std::vector<int>& labels) {
    std::vector<int> out(labels);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline std::vector<double> mean_of(const Points& x, const std::vector<int>& labels, int label) {
    std::vector<double> m(x[0].size(), 0.0);
    int count = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (labels[i] != label) continue;
        ++count;
        for (std::size_t j = 0; j < m.size(); ++j) m[j] += x[i][j];
    }
    for (auto& v : m) v /= count;
    return m;
}

/// Mean silhouette; singleton clusters contribute 0.
inline double silhouette(const Points& x, const std::vector<int>& labels) {
    const auto ids = distinct_labels(labels);
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double a = 0.0;
        int same = 0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (j != i && labels[j] == labels[i]) {
                a += dist(x[i], x[j]);
                ++same;
            }
        }
        if (same == 0) continue;
        a /= same;
        double b = std::numeric_limits<double>::infinity();
        for (int other : ids) {
            if (other == labels[i]) continue;
            double sum = 0.0;
            int count = 0;
            for (std::size_t j = 0; j < x.size(); ++j) {
                if (labels[j] == other) {
                    sum += dist(x[i], x[j]);
                    ++count;
                }
            }
            b = std::min(b, sum / count);
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(x.size());
}

inline double calinski_harabasz(const Points& x, const std::vector<int>& labels) {
    const auto ids = distinct_labels(labels);
    const double n = static_cast<double>(x.size());
    const double k = static_cast<double>(ids.size());
    std::vector<double> overall(x[0].size(), 0.0);
    for (const auto& p : x)
        for (std::size_t j = 0; j < p.size(); ++j) overall[j] += p[j] / n;
    double between = 0.0, within = 0.0;
    for (int c : ids) {
        const auto m = mean_of(x, labels, c);
        double count = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (labels[i] == c) {
                within += sqdist(x[i], m);
                count += 1.0;
            }
        }
        between += count * sqdist(m, overall);
    }
    if (within == 0.0) return std::numeric_limits<double>::infinity();
    return (between / (k - 1.0)) / (within / (n - k));
}

inline double davies_bouldin(const Points& x, const std::vector<int>& labels) {
    const auto ids = distinct_labels(labels);
    std::vector<std::vector<double>> centers;
    std::vector<double> scatter;
    for (int c : ids) {
        centers.push_back(mean_of(x, labels, c));
        double s = 0.0;
        int count = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (labels[i] == c) {
                s += dist(x[i], centers.back());
                ++count;
            }
        }
        scatter.push_back(s / count);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < ids.size(); ++j) {
            if (i != j) worst = std::max(worst, (scatter[i] + scatter[j]) / dist(centers[i], centers[j]));
        }
        total += worst;
    }
    return total / static_cast<double>(ids.size());
}

/// Minimum k-means objective over every labeling into k non-empty groups.
inline double exhaustive_min_inertia(const Points& x, int k) {
    const std::size_t n = x.size();
    std::vector<int> labels(n, 0);
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, int)> visit = [&](std::size_t i, int used) {
        if (i == n) {
            if (used != k) return;
            double j = 0.0;
            for (int c = 0; c < k; ++c) {
                const auto m = mean_of(x, labels, c);
                for (std::size_t p = 0; p < n; ++p)
                    if (labels[p] == c) j += sqdist(x[p], m);
            }
            best = std::min(best, j);
            return;
        }
        // Canonical labelings only: a point may open at most one new group.
        for (int c = 0; c <= std::min(used, k - 1); ++c) {
            labels[i] = c;
            visit(i + 1, std::max(used, c + 1));
        }
    };
    visit(0, 0);
    return best;
}

/// Adjusted Rand index from the contingency table.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, double> cells;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cells[{a[i], b[i]}] += 1;
        rows[a[i]] += 1;
        cols[b[i]] += 1;
    }
    auto pairs = [](double m) { return m * (m - 1) / 2; };
    double index = 0, sum_rows = 0, sum_cols = 0;
    for (const auto& [key, v] : cells) index += pairs(v);
    for (const auto& [key, v] : rows) sum_rows += pairs(v);
    for (const auto& [key, v] : cols) sum_cols += pairs(v);
    const double expected = sum_rows * sum_cols / pairs(static_cast<double>(a.size()));
    const double max_index = (sum_rows + sum_cols) / 2;
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

/// Central difference of f at x along every coordinate.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double step) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double up = f(x);
        x[i] = keep - step;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2 * step);
    }
    return g;
}

}  // namespace oracle
