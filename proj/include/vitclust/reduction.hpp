#pragma once

#include "vitclust/matrix.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vitclust::reduction {

/// Exact k nearest neighbors of every point, excluding the point itself.
/// Row i occupies [i*k, (i+1)*k) of both arrays, ascending by distance.
struct NeighborGraph {
    std::size_t n = 0;
    int k = 0;
    std::vector<int> index;
    std::vector<double> distance;

    int neighbor(std::size_t i, int j) const { return index[i * k + j]; }
    double dist(std::size_t i, int j) const { return distance[i * k + j]; }
};

/// Per-point local connectivity: rho = nearest-neighbor distance, sigma =
/// bandwidth solving sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(k).
struct SmoothedKnn {
    std::vector<double> rho;
    std::vector<double> sigma;
};

inline constexpr double kSigmaMin = 1e-12;
inline constexpr double kSigmaMax = 1e4;
inline constexpr int kSigmaIterations = 64;

/// One weighted, directed entry of the fuzzy graph.
struct Edge {
    int head = 0;
    int tail = 0;
    double weight = 0.0;
};

/// Symmetric sparse graph. Each undirected pair appears as two Edges
/// (i,j) and (j,i) with equal weight; sorted by (head, tail); no self-loops;
/// weights in (0, 1].
struct FuzzyGraph {
    std::size_t n = 0;
    std::vector<Edge> edges;

    /// 0 when the pair is not connected.
    double weight(int i, int j) const;
};

/// 1/(1 + a t^(2b)) output-space similarity curve.
struct CurveParams {
    double a = 0.0;
    double b = 0.0;
};

enum class InitMethod { Spectral, Random };

struct LayoutConfig {
    int n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    int target_dim = 2;
    int epochs = 200;
    double learning_rate = 1.0;
    int negative_samples = 5;
    std::optional<CurveParams> curve;  // fitted from min_dist/spread when unset
    std::uint64_t seed = 42;
    InitMethod init = InitMethod::Spectral;
    /// Hogwild edge updates across threads; not bit-reproducible.
    bool parallel = false;

    /// Throws ConfigError when an invariant fails against `source_dim`.
    void validate(Eigen::Index source_dim) const;
};

/// Above this size the dense Laplacian eigensolve is skipped in favor of
/// the Gaussian initialization.
inline constexpr std::size_t kSpectralMaxPoints = 4000;

/// Brute-force Euclidean kNN; ties go to the lower index. Throws
/// TooFewPoints when n <= k.
NeighborGraph knn_graph(const MatrixD& points, int k);

/// Bisection on [kSigmaMin, kSigmaMax] for kSigmaIterations steps. When the
/// target is unreachable sigma clamps to the nearer bracket end.
SmoothedKnn smooth_knn(const NeighborGraph& graph);

/// Probabilistic t-conorm a + b - a*b.
inline double fuzzy_union(double a, double b) { return 1.0 - (1.0 - a) * (1.0 - b); }

/// Combines directed memberships a_ij into w = a + a^T - a o a^T. Entries
/// with non-positive weight are dropped.
FuzzyGraph symmetrize(std::size_t n, const std::vector<Edge>& directed);

/// Directed a_ij = exp(-max(0, d_ij - rho_i) / sigma_i), then symmetrized.
FuzzyGraph membership_strengths(const NeighborGraph& graph, const SmoothedKnn& smoothed);

/// Levenberg-Marquardt fit of 1/(1+a t^(2b)) to the piecewise target
/// (1 for t <= min_dist, exp(-(t - min_dist)/spread) beyond) on 300 points
/// of [0, 3*spread]. Throws FitError on bad input or non-convergence.
CurveParams fit_ab(double min_dist, double spread = 1.0);

/// Gradient coefficients for the pair losses, with d2 = |x - y|^2:
///   attractive  L = log(1 + a d2^b)             dL/dx = c (x - y)
///   repulsive   L = log(1 + 1 / (a d2^b))       dL/dx = c (x - y)
/// `eps` softens the repulsive pole at d2 = 0 (the layout uses 1e-3).
double attractive_coefficient(double d2, const CurveParams& curve);
double repulsive_coefficient(double d2, const CurveParams& curve, double eps = 0.0);
double attractive_loss(double d2, const CurveParams& curve);
double repulsive_loss(double d2, const CurveParams& curve);

/// Normalized-Laplacian eigenvectors 1..dim, rescaled so the largest
/// coordinate magnitude is 10. Returns nullopt when the graph is too large
/// or has too few points for `dim` components.
std::optional<MatrixD> spectral_init(const FuzzyGraph& graph, int dim, std::uint64_t seed);

/// Gaussian N(0, 1e-2^2) initialization.
MatrixD random_init(std::size_t n, int dim, std::uint64_t seed);

/// SGD over graph edges: attractive updates sampled in proportion to edge
/// weight, `negative_samples` repulsive updates per attraction, learning
/// rate decayed linearly to 0. Deterministic for a fixed seed unless
/// cfg.parallel is set.
MatrixD optimize_layout(const FuzzyGraph& graph, const LayoutConfig& cfg);
MatrixD optimize_layout(const FuzzyGraph& graph, const LayoutConfig& cfg, MatrixD initial);

/// Summary of a full UMAP run, echoed into run manifests.
struct UmapReport {
    int effective_neighbors = 0;
    CurveParams curve;
    std::string init_used;  // "spectral" or "random"
    std::size_t edges = 0;
};

/// knn_graph -> smooth_knn -> membership_strengths -> optimize_layout.
/// n_neighbors is capped at n-1 for small inputs (TooFewPoints below 3 rows).
MatrixD umap(const MatrixD& points, const LayoutConfig& cfg, UmapReport* report = nullptr);

/// Projection onto the top-d principal axes. Each axis is sign-fixed so its
/// largest-magnitude loading is positive. Throws ShapeError when
/// d > min(n, D).
MatrixD pca(const MatrixD& points, int d);

}  // namespace vitclust::reduction
