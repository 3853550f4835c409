#pragma once

#include "vitclust/embedding_store.hpp"
#include "vitclust/matrix.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vitclust::clustering {

struct KMeansConfig {
    int k = 20;
    int max_iter = 300;
    double tol = 1e-4;  // relative inertia improvement
    int n_init = 10;
    std::uint64_t seed = 42;

    void validate() const;
};

struct ClusterModel {
    MatrixD centroids;  // k x d
    Labels assignments;
    double inertia = 0.0;
    int iterations = 0;  // Lloyd steps taken by the winning restart
    KMeansConfig config;

    int k() const { return static_cast<int>(centroids.rows()); }
    int dim() const { return static_cast<int>(centroids.cols()); }
};

struct LloydResult {
    Labels assignments;
    MatrixD centroids;
    double inertia = 0.0;
    int reseeded = 0;  // empty clusters repaired in this step
};

/// First centroid uniform, each next one drawn with probability
/// proportional to squared distance from the nearest chosen centroid. Once
/// every remaining point has zero residual, draws are uniform over the
/// unchosen points. Throws TooFewPoints when n < k.
MatrixD kmeans_pp_init(const MatrixD& points, int k, std::uint64_t seed);

/// Nearest-centroid assignment (ties to the lower index), then mean update.
/// An empty cluster takes the point farthest from its own centroid among
/// clusters with at least two members.
LloydResult lloyd_step(const MatrixD& points, const MatrixD& centroids);

/// Sum of squared distances from each point to its assigned centroid.
double inertia(const MatrixD& points, const Labels& labels, const MatrixD& centroids);

/// Best of n_init seeded k-means++ restarts by final inertia (earlier
/// restart wins ties). Each restart iterates until the relative improvement
/// drops below tol or max_iter steps.
ClusterModel fit(const MatrixD& points, const KMeansConfig& cfg);

/// Nearest-centroid label per row, ties to the lower index.
Labels predict(const MatrixD& centroids, const MatrixD& points);

struct Representative {
    std::int64_t record_id = 0;
    std::size_t row = 0;
    std::string image_path;
    double distance = 0.0;
};

/// per_cluster[c] lists the m rows nearest centroid c among all rows,
/// ascending by distance, ties to the lower record_id.
struct Representatives {
    std::vector<std::vector<Representative>> per_cluster;
};

/// Throws AlignmentError if the manifest does not match the rows of `points`
/// and ShapeError if centroid width differs from the point width.
Representatives representatives(const MatrixD& points, const store::Manifest& manifest, const MatrixD& centroids,
                                std::size_t m = 10);

std::string model_to_json(const ClusterModel& model);
ClusterModel model_from_json(const std::string& text);

std::string representatives_to_json(const Representatives& reps);
Representatives representatives_from_json(const std::string& text);

}  // namespace vitclust::clustering
