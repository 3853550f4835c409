#include "vitclust/reduction.hpp"

#include "vitclust/error.hpp"
#include "vitclust/parallel.hpp"
#include "vitclust/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>

namespace vitclust::reduction {

double FuzzyGraph::weight(int i, int j) const {
    const auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{i, j}, [](const Edge& e, const auto& key) {
        return e.head != key.first ? e.head < key.first : e.tail < key.second;
    });
    return it != edges.end() && it->head == i && it->tail == j ? it->weight : 0.0;
}

void LayoutConfig::validate(Eigen::Index source_dim) const {
    if (n_neighbors < 2) throw ConfigError("n_neighbors must be at least 2");
    if (target_dim < 1 || target_dim >= source_dim) {
        throw ConfigError("target_dim " + std::to_string(target_dim) + " must lie in [1, " +
                          std::to_string(source_dim) + ")");
    }
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (negative_samples < 0) throw ConfigError("negative_samples must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!curve && !(min_dist > 0.0 && min_dist < spread)) {
        throw ConfigError("min_dist must lie in (0, spread)");
    }
}

NeighborGraph knn_graph(const MatrixD& points, int k) {
    const std::size_t n = static_cast<std::size_t>(points.rows());
    if (k < 1 || n <= static_cast<std::size_t>(k)) {
        throw TooFewPoints(std::to_string(n) + " points cannot supply " + std::to_string(k) + " neighbors each");
    }
    NeighborGraph g;
    g.n = n;
    g.k = k;
    g.index.resize(n * k);
    g.distance.resize(n * k);

    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::vector<std::pair<double, int>> candidates(n - 1);
        for (std::size_t i = begin; i < end; ++i) {
            std::size_t c = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                candidates[c++] = {(points.row(i) - points.row(j)).squaredNorm(), static_cast<int>(j)};
            }
            // pair ordering breaks distance ties by the lower index
            std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());
            for (int j = 0; j < k; ++j) {
                g.index[i * k + j] = candidates[j].second;
                g.distance[i * k + j] = std::sqrt(candidates[j].first);
            }
        }
    });
    return g;
}

SmoothedKnn smooth_knn(const NeighborGraph& graph) {
    SmoothedKnn s;
    s.rho.resize(graph.n);
    s.sigma.resize(graph.n);
    const double target = std::log2(static_cast<double>(graph.k));

    parallel_for(graph.n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const double rho = graph.dist(i, 0);
            auto mass = [&](double sigma) {
                double total = 0.0;
                for (int j = 0; j < graph.k; ++j) total += std::exp(-std::max(0.0, graph.dist(i, j) - rho) / sigma);
                return total;
            };
            double sigma;
            if (mass(kSigmaMin) >= target) {
                sigma = kSigmaMin;
            } else if (mass(kSigmaMax) <= target) {
                sigma = kSigmaMax;
            } else {
                double lo = kSigmaMin, hi = kSigmaMax;
                for (int it = 0; it < kSigmaIterations; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (mass(mid) > target) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                sigma = 0.5 * (lo + hi);
            }
            s.rho[i] = rho;
            s.sigma[i] = sigma;
        }
    });
    return s;
}

FuzzyGraph symmetrize(std::size_t n, const std::vector<Edge>& directed) {
    // Key every entry by its unordered pair; `forward` marks lo -> hi.
    struct Half {
        int lo, hi;
        bool forward;
        double weight;
    };
    std::vector<Half> halves;
    halves.reserve(directed.size());
    for (const Edge& e : directed) {
        if (e.head == e.tail || !(e.weight > 0.0)) continue;
        if (e.head < e.tail) {
            halves.push_back({e.head, e.tail, true, e.weight});
        } else {
            halves.push_back({e.tail, e.head, false, e.weight});
        }
    }
    std::sort(halves.begin(), halves.end(), [](const Half& x, const Half& y) {
        if (x.lo != y.lo) return x.lo < y.lo;
        if (x.hi != y.hi) return x.hi < y.hi;
        return x.forward > y.forward;
    });

    FuzzyGraph g;
    g.n = n;
    for (std::size_t i = 0; i < halves.size();) {
        double fwd = 0.0, bwd = 0.0;
        std::size_t j = i;
        for (; j < halves.size() && halves[j].lo == halves[i].lo && halves[j].hi == halves[i].hi; ++j) {
            // duplicates of one direction combine by the same t-conorm
            if (halves[j].forward) {
                fwd = fuzzy_union(fwd, halves[j].weight);
            } else {
                bwd = fuzzy_union(bwd, halves[j].weight);
            }
        }
        const double w = std::min(1.0, fuzzy_union(fwd, bwd));
        if (w > 0.0) {
            g.edges.push_back({halves[i].lo, halves[i].hi, w});
            g.edges.push_back({halves[i].hi, halves[i].lo, w});
        }
        i = j;
    }
    std::sort(g.edges.begin(), g.edges.end(),
              [](const Edge& x, const Edge& y) { return x.head != y.head ? x.head < y.head : x.tail < y.tail; });
    return g;
}

FuzzyGraph membership_strengths(const NeighborGraph& graph, const SmoothedKnn& smoothed) {
    std::vector<Edge> directed;
    directed.reserve(graph.n * graph.k);
    for (std::size_t i = 0; i < graph.n; ++i) {
        for (int j = 0; j < graph.k; ++j) {
            const double excess = std::max(0.0, graph.dist(i, j) - smoothed.rho[i]);
            directed.push_back({static_cast<int>(i), graph.neighbor(i, j), std::exp(-excess / smoothed.sigma[i])});
        }
    }
    return symmetrize(graph.n, directed);
}

CurveParams fit_ab(double min_dist, double spread) {
    if (!(spread > 0.0) || !(min_dist > 0.0) || !(min_dist < spread)) {
        throw FitError("fit_ab requires 0 < min_dist < spread");
    }
    constexpr int kPoints = 300;
    Eigen::VectorXd t(kPoints), y(kPoints);
    for (int i = 0; i < kPoints; ++i) {
        t[i] = 3.0 * spread * i / (kPoints - 1);
        y[i] = t[i] <= min_dist ? 1.0 : std::exp(-(t[i] - min_dist) / spread);
    }

    auto residuals = [&](double a, double b, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        for (int i = 0; i < kPoints; ++i) {
            const double u = t[i] > 0.0 ? std::pow(t[i], 2.0 * b) : 0.0;
            const double denom = 1.0 + a * u;
            r[i] = 1.0 / denom - y[i];
            if (jac) {
                const double d2 = denom * denom;
                (*jac)(i, 0) = -u / d2;
                (*jac)(i, 1) = t[i] > 0.0 ? -a * u * 2.0 * std::log(t[i]) / d2 : 0.0;
            }
        }
        return r.squaredNorm();
    };

    double a = 1.0, b = 1.0, lambda = 1e-3;
    Eigen::VectorXd r(kPoints), r_try(kPoints);
    Eigen::MatrixXd jac(kPoints, 2);
    double cost = residuals(a, b, r, &jac);
    for (int iter = 0; iter < 500; ++iter) {
        const Eigen::Matrix2d jtj = jac.transpose() * jac;
        const Eigen::Vector2d grad = jac.transpose() * r;
        if (grad.norm() < 1e-14) return {a, b};
        bool improved = false;
        for (int tries = 0; tries < 40 && !improved; ++tries) {
            Eigen::Matrix2d damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::Vector2d step = damped.ldlt().solve(-grad);
            const double a_new = a + step[0], b_new = b + step[1];
            if (a_new > 0.0 && b_new > 0.0 && std::isfinite(a_new) && std::isfinite(b_new)) {
                const double cost_new = residuals(a_new, b_new, r_try, nullptr);
                if (cost_new < cost) {
                    const bool converged = std::abs(step[0]) <= 1e-12 * (1.0 + std::abs(a)) &&
                                           std::abs(step[1]) <= 1e-12 * (1.0 + std::abs(b));
                    const bool stalled = cost - cost_new <= 1e-16 * cost;
                    a = a_new;
                    b = b_new;
                    cost = residuals(a, b, r, &jac);
                    lambda = std::max(lambda * 0.1, 1e-12);
                    improved = true;
                    if (converged || stalled) return {a, b};
                    continue;
                }
            }
            lambda *= 10.0;
        }
        // No step improved even under heavy damping: we are at the optimum
        // to working precision.
        if (!improved) {
            if (std::isfinite(cost) && grad.norm() < 1e-8) return {a, b};
            break;
        }
    }
    throw FitError("curve fit did not converge for min_dist=" + std::to_string(min_dist));
}

double attractive_coefficient(double d2, const CurveParams& c) {
    if (d2 <= 0.0) return 0.0;
    const double p = std::pow(d2, c.b);
    return 2.0 * c.a * c.b * (p / d2) / (1.0 + c.a * p);
}

double repulsive_coefficient(double d2, const CurveParams& c, double eps) {
    if (d2 + eps <= 0.0) return 0.0;
    return -2.0 * c.b / ((eps + d2) * (1.0 + c.a * std::pow(d2, c.b)));
}

double attractive_loss(double d2, const CurveParams& c) { return std::log1p(c.a * std::pow(d2, c.b)); }

double repulsive_loss(double d2, const CurveParams& c) { return std::log1p(1.0 / (c.a * std::pow(d2, c.b))); }

namespace {

void fix_signs(Eigen::MatrixXd& vectors) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        Eigen::Index arg = 0;
        vectors.col(c).cwiseAbs().maxCoeff(&arg);
        if (vectors(arg, c) < 0.0) vectors.col(c) *= -1.0;
    }
}

}  // namespace

std::optional<MatrixD> spectral_init(const FuzzyGraph& graph, int dim, std::uint64_t seed) {
    const std::size_t n = graph.n;
    if (n > kSpectralMaxPoints || static_cast<std::size_t>(dim) + 1 > n || dim < 1) return std::nullopt;

    Eigen::VectorXd degree = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (const Edge& e : graph.edges) degree[e.head] += e.weight;
    Eigen::VectorXd inv_sqrt(degree.size());
    for (Eigen::Index i = 0; i < degree.size(); ++i) inv_sqrt[i] = degree[i] > 0.0 ? 1.0 / std::sqrt(degree[i]) : 0.0;

    Eigen::MatrixXd laplacian = Eigen::MatrixXd::Identity(degree.size(), degree.size());
    for (const Edge& e : graph.edges) laplacian(e.head, e.tail) -= e.weight * inv_sqrt[e.head] * inv_sqrt[e.tail];

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian);
    if (solver.info() != Eigen::Success) return std::nullopt;
    Eigen::MatrixXd coords = solver.eigenvectors().middleCols(1, dim);
    fix_signs(coords);
    const double peak = coords.cwiseAbs().maxCoeff();
    if (!(peak > 0.0) || !coords.allFinite()) return std::nullopt;
    coords *= 10.0 / peak;

    Rng rng(mix_seed(seed, 0x5ec7));
    MatrixD out = coords;
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += 1e-4 * standard_normal(rng);
    return out;
}

MatrixD random_init(std::size_t n, int dim, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x9a55));
    MatrixD out(static_cast<Eigen::Index>(n), dim);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = 1e-2 * standard_normal(rng);
    return out;
}

namespace {

constexpr double kGradClip = 4.0;
constexpr double kRepulsionEps = 1e-3;

double clip(double v) { return std::clamp(v, -kGradClip, kGradClip); }

/// Plain or relaxed-atomic access to layout coordinates.
template <bool Atomic>
struct Coords {
    double* data;
    int dim;

    double load(int row, int c) const {
        if constexpr (Atomic) {
            return std::atomic_ref<double>(data[static_cast<std::size_t>(row) * dim + c]).load(std::memory_order_relaxed);
        } else {
            return data[static_cast<std::size_t>(row) * dim + c];
        }
    }
    void store(int row, int c, double v) const {
        if constexpr (Atomic) {
            std::atomic_ref<double>(data[static_cast<std::size_t>(row) * dim + c]).store(v, std::memory_order_relaxed);
        } else {
            data[static_cast<std::size_t>(row) * dim + c] = v;
        }
    }
};

struct EdgeSchedule {
    std::vector<int> head, tail;
    std::vector<double> epochs_per_sample, next_sample, epochs_per_negative, next_negative;
};

EdgeSchedule build_schedule(const FuzzyGraph& graph, const LayoutConfig& cfg) {
    EdgeSchedule s;
    double max_w = 0.0;
    for (const Edge& e : graph.edges) max_w = std::max(max_w, e.weight);
    // Edges that would be sampled less than once over the run are dropped.
    const double floor = max_w / cfg.epochs;
    for (const Edge& e : graph.edges) {
        if (e.weight < floor) continue;
        const double per = max_w / e.weight;
        s.head.push_back(e.head);
        s.tail.push_back(e.tail);
        s.epochs_per_sample.push_back(per);
        s.next_sample.push_back(per);
        const double neg = cfg.negative_samples > 0 ? per / cfg.negative_samples : 0.0;
        s.epochs_per_negative.push_back(neg);
        s.next_negative.push_back(neg);
    }
    return s;
}

template <bool Atomic>
void run_edges(EdgeSchedule& s, const Coords<Atomic>& xs, std::size_t n_points, const CurveParams& curve,
               int negative_samples, double alpha, int epoch, std::size_t begin, std::size_t end, Rng& rng) {
    const int dim = xs.dim;
    std::vector<double> current(dim), other(dim);
    for (std::size_t e = begin; e < end; ++e) {
        if (s.next_sample[e] > epoch) continue;
        const int j = s.head[e];
        const int k = s.tail[e];

        double d2 = 0.0;
        for (int c = 0; c < dim; ++c) {
            current[c] = xs.load(j, c);
            other[c] = xs.load(k, c);
            const double diff = current[c] - other[c];
            d2 += diff * diff;
        }
        const double attract = attractive_coefficient(d2, curve);
        for (int c = 0; c < dim; ++c) {
            const double g = clip(attract * (current[c] - other[c]));
            current[c] -= alpha * g;
            xs.store(j, c, current[c]);
            xs.store(k, c, other[c] + alpha * g);
        }
        s.next_sample[e] += s.epochs_per_sample[e];

        if (negative_samples <= 0) continue;
        const int n_neg = static_cast<int>((epoch - s.next_negative[e]) / s.epochs_per_negative[e]);
        for (int p = 0; p < n_neg; ++p) {
            const int target = static_cast<int>(uniform_index(rng, n_points));
            if (target == j) continue;
            double nd2 = 0.0;
            for (int c = 0; c < dim; ++c) {
                other[c] = xs.load(target, c);
                const double diff = current[c] - other[c];
                nd2 += diff * diff;
            }
            if (nd2 <= 0.0) continue;
            const double repel = repulsive_coefficient(nd2, curve, kRepulsionEps);
            for (int c = 0; c < dim; ++c) {
                current[c] -= alpha * clip(repel * (current[c] - other[c]));
                xs.store(j, c, current[c]);
            }
        }
        s.next_negative[e] += n_neg * s.epochs_per_negative[e];
    }
}

}  // namespace

MatrixD optimize_layout(const FuzzyGraph& graph, const LayoutConfig& cfg) {
    if (graph.n == 0) return MatrixD(0, cfg.target_dim);
    std::optional<MatrixD> init;
    if (cfg.init == InitMethod::Spectral) init = spectral_init(graph, cfg.target_dim, cfg.seed);
    if (!init) init = random_init(graph.n, cfg.target_dim, cfg.seed);
    return optimize_layout(graph, cfg, std::move(*init));
}

MatrixD optimize_layout(const FuzzyGraph& graph, const LayoutConfig& cfg, MatrixD layout) {
    if (static_cast<std::size_t>(layout.rows()) != graph.n) {
        throw ShapeError("initial layout has " + std::to_string(layout.rows()) + " rows for a graph of " +
                         std::to_string(graph.n) + " points");
    }
    if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
    if (graph.edges.empty()) return layout;
    const CurveParams curve = cfg.curve ? *cfg.curve : fit_ab(cfg.min_dist, cfg.spread);
    EdgeSchedule schedule = build_schedule(graph, cfg);
    const int dim = static_cast<int>(layout.cols());

    if (!cfg.parallel || num_threads() <= 1) {
        Rng rng(mix_seed(cfg.seed, 0x1a70));
        const Coords<false> xs{layout.data(), dim};
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            const double alpha = cfg.learning_rate * (1.0 - static_cast<double>(epoch) / cfg.epochs);
            run_edges(schedule, xs, graph.n, curve, cfg.negative_samples, alpha, epoch, 0, schedule.head.size(), rng);
        }
        return layout;
    }

    const Coords<true> xs{layout.data(), dim};
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double alpha = cfg.learning_rate * (1.0 - static_cast<double>(epoch) / cfg.epochs);
        parallel_for(schedule.head.size(), [&](std::size_t begin, std::size_t end) {
            Rng rng(mix_seed(cfg.seed, (static_cast<std::uint64_t>(epoch) << 32) ^ begin));
            run_edges(schedule, xs, graph.n, curve, cfg.negative_samples, alpha, epoch, begin, end, rng);
        });
    }
    return layout;
}

MatrixD umap(const MatrixD& points, const LayoutConfig& cfg, UmapReport* report) {
    cfg.validate(points.cols());
    const auto n = static_cast<std::size_t>(points.rows());
    if (n < 3) throw TooFewPoints("UMAP needs at least 3 points, got " + std::to_string(n));
    LayoutConfig run = cfg;
    run.n_neighbors = static_cast<int>(std::min<std::size_t>(cfg.n_neighbors, n - 1));
    if (!run.curve) run.curve = fit_ab(cfg.min_dist, cfg.spread);

    const NeighborGraph knn = knn_graph(points, run.n_neighbors);
    const FuzzyGraph graph = membership_strengths(knn, smooth_knn(knn));

    std::optional<MatrixD> init;
    if (run.init == InitMethod::Spectral) init = spectral_init(graph, run.target_dim, run.seed);
    const bool spectral = init.has_value();
    if (!init) init = random_init(n, run.target_dim, run.seed);

    if (report) {
        report->effective_neighbors = run.n_neighbors;
        report->curve = *run.curve;
        report->init_used = spectral ? "spectral" : "random";
        report->edges = graph.edges.size();
    }
    return optimize_layout(graph, run, std::move(*init));
}

MatrixD pca(const MatrixD& points, int d) {
    const Eigen::Index n = points.rows();
    const Eigen::Index dims = points.cols();
    if (d < 1 || d > std::min(n, dims)) {
        throw ShapeError("pca target " + std::to_string(d) + " exceeds min(n, D) = " +
                         std::to_string(std::min(n, dims)));
    }
    const Eigen::RowVectorXd mean = points.colwise().mean();
    const MatrixD centered = points.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / std::max<double>(1.0, static_cast<double>(n - 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw FitError("covariance eigendecomposition failed");
    // eigenvalues ascend; take the top d in descending order
    Eigen::MatrixXd axes = solver.eigenvectors().rightCols(d).rowwise().reverse();
    fix_signs(axes);
    return centered * axes;
}

}  // namespace vitclust::reduction
