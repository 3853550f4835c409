#include "vitclust/clustering.hpp"

#include "vitclust/error.hpp"
#include "vitclust/parallel.hpp"
#include "vitclust/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <numeric>

namespace vitclust::clustering {

void KMeansConfig::validate() const {
    if (k < 1) throw ConfigError("k must be at least 1");
    if (max_iter < 1) throw ConfigError("max_iter must be at least 1");
    if (!(tol >= 0.0)) throw ConfigError("tol must be non-negative");
    if (n_init < 1) throw ConfigError("n_init must be at least 1");
}

namespace {

void require_enough_points(Eigen::Index n, int k) {
    if (n < k) {
        throw TooFewPoints(std::to_string(n) + " points cannot form " + std::to_string(k) + " clusters");
    }
}

int nearest(const MatrixD& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& x, double* best_d2 = nullptr) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const double d2 = (centroids.row(c) - x).squaredNorm();
        if (d2 < best_dist) {
            best_dist = d2;
            best = static_cast<int>(c);
        }
    }
    if (best_d2) *best_d2 = best_dist;
    return best;
}

void recompute_mean(const MatrixD& points, const Labels& labels, int cluster, MatrixD& centroids) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(points.cols());
    std::size_t count = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == cluster) {
            sum += points.row(static_cast<Eigen::Index>(i));
            ++count;
        }
    }
    if (count > 0) centroids.row(cluster) = sum / static_cast<double>(count);
}

}  // namespace

MatrixD kmeans_pp_init(const MatrixD& points, int k, std::uint64_t seed) {
    const Eigen::Index n = points.rows();
    if (k < 1) throw ConfigError("k must be at least 1");
    require_enough_points(n, k);

    Rng rng(seed);
    MatrixD centroids(k, points.cols());
    std::vector<char> chosen(static_cast<std::size_t>(n), 0);
    std::vector<double> residual(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());

    auto take = [&](Eigen::Index idx, int slot) {
        chosen[idx] = 1;
        centroids.row(slot) = points.row(idx);
        for (Eigen::Index i = 0; i < n; ++i) {
            residual[i] = std::min(residual[i], (points.row(i) - points.row(idx)).squaredNorm());
        }
    };

    take(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))), 0);
    for (int slot = 1; slot < k; ++slot) {
        double total = 0.0;
        for (double r : residual) total += r;
        Eigen::Index pick = -1;
        if (total > 0.0) {
            const double target = uniform01(rng) * total;
            double cumulative = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (residual[i] <= 0.0) continue;
                cumulative += residual[i];
                pick = i;
                if (cumulative > target) break;
            }
        } else {
            std::vector<Eigen::Index> open;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!chosen[i]) open.push_back(i);
            }
            pick = open[uniform_index(rng, open.size())];
        }
        take(pick, slot);
    }
    return centroids;
}

double inertia(const MatrixD& points, const Labels& labels, const MatrixD& centroids) {
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        total += (points.row(static_cast<Eigen::Index>(i)) - centroids.row(labels[i])).squaredNorm();
    }
    return total;
}

LloydResult lloyd_step(const MatrixD& points, const MatrixD& centroids) {
    if (points.cols() != centroids.cols()) {
        throw ShapeError("points have " + std::to_string(points.cols()) + " columns, centroids " +
                         std::to_string(centroids.cols()));
    }
    const auto n = static_cast<std::size_t>(points.rows());
    const int k = static_cast<int>(centroids.rows());

    LloydResult out;
    out.assignments = predict(centroids, points);

    std::vector<std::size_t> counts(k, 0);
    out.centroids = MatrixD::Zero(k, points.cols());
    for (std::size_t i = 0; i < n; ++i) {
        out.centroids.row(out.assignments[i]) += points.row(static_cast<Eigen::Index>(i));
        ++counts[out.assignments[i]];
    }
    for (int c = 0; c < k; ++c) {
        if (counts[c] > 0) out.centroids.row(c) /= static_cast<double>(counts[c]);
    }

    for (int c = 0; c < k; ++c) {
        if (counts[c] > 0) continue;
        std::size_t far = n;
        double far_d2 = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (counts[out.assignments[i]] < 2) continue;
            const double d2 =
                (points.row(static_cast<Eigen::Index>(i)) - out.centroids.row(out.assignments[i])).squaredNorm();
            if (d2 > far_d2) {
                far_d2 = d2;
                far = i;
            }
        }
        if (far == n) break;  // fewer points than clusters; cannot repair
        const int donor = out.assignments[far];
        out.assignments[far] = c;
        --counts[donor];
        counts[c] = 1;
        out.centroids.row(c) = points.row(static_cast<Eigen::Index>(far));
        recompute_mean(points, out.assignments, donor, out.centroids);
        ++out.reseeded;
    }
    out.inertia = inertia(points, out.assignments, out.centroids);
    return out;
}

Labels predict(const MatrixD& centroids, const MatrixD& points) {
    if (points.rows() > 0 && points.cols() != centroids.cols()) {
        throw ShapeError("points have " + std::to_string(points.cols()) + " columns, model expects " +
                         std::to_string(centroids.cols()));
    }
    Labels labels(static_cast<std::size_t>(points.rows()));
    parallel_for(labels.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) labels[i] = nearest(centroids, points.row(static_cast<Eigen::Index>(i)));
    });
    return labels;
}

ClusterModel fit(const MatrixD& points, const KMeansConfig& cfg) {
    cfg.validate();
    require_enough_points(points.rows(), cfg.k);

    std::vector<ClusterModel> runs(cfg.n_init);
    auto run_one = [&](int r) {
        ClusterModel m;
        m.config = cfg;
        m.centroids = kmeans_pp_init(points, cfg.k, mix_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        double previous = std::numeric_limits<double>::infinity();
        for (int it = 0; it < cfg.max_iter; ++it) {
            LloydResult step = lloyd_step(points, m.centroids);
            m.centroids = std::move(step.centroids);
            m.assignments = std::move(step.assignments);
            m.inertia = step.inertia;
            m.iterations = it + 1;
            if (std::isfinite(previous)) {
                const double improvement = previous > 0.0 ? (previous - step.inertia) / previous : 0.0;
                if (improvement < cfg.tol) break;
            }
            previous = step.inertia;
        }
        runs[r] = std::move(m);
    };
    // Restarts are independent; the winner is picked in restart order.
    parallel_for(static_cast<std::size_t>(cfg.n_init), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) run_one(static_cast<int>(r));
    });

    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (runs[r].inertia < runs[best].inertia) best = r;
    }
    return std::move(runs[best]);
}

Representatives representatives(const MatrixD& points, const store::Manifest& manifest, const MatrixD& centroids,
                                std::size_t m) {
    if (static_cast<std::size_t>(points.rows()) != manifest.size()) {
        throw AlignmentError("projection has " + std::to_string(points.rows()) + " rows, manifest has " +
                             std::to_string(manifest.size()));
    }
    if (points.rows() > 0 && points.cols() != centroids.cols()) {
        throw ShapeError("centroid width " + std::to_string(centroids.cols()) + " does not match points " +
                         std::to_string(points.cols()));
    }
    Representatives reps;
    reps.per_cluster.resize(static_cast<std::size_t>(centroids.rows()));
    const std::size_t n = manifest.size();
    const std::size_t take = std::min(m, n);
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        std::vector<Representative> all(n);
        for (std::size_t i = 0; i < n; ++i) {
            all[i].record_id = manifest.records[i].record_id;
            all[i].row = i;
            all[i].image_path = manifest.records[i].image_path;
            all[i].distance = (points.row(static_cast<Eigen::Index>(i)) - centroids.row(c)).norm();
        }
        std::partial_sort(all.begin(), all.begin() + take, all.end(), [](const Representative& x, const Representative& y) {
            return x.distance != y.distance ? x.distance < y.distance : x.record_id < y.record_id;
        });
        all.resize(take);
        reps.per_cluster[c] = std::move(all);
    }
    return reps;
}

std::string model_to_json(const ClusterModel& model) {
    nlohmann::ordered_json j;
    j["k"] = model.k();
    j["d"] = model.dim();
    j["centroids"] = std::vector<double>(model.centroids.data(), model.centroids.data() + model.centroids.size());
    j["inertia"] = model.inertia;
    j["iterations"] = model.iterations;
    j["seed"] = model.config.seed;
    j["config"] = {{"k", model.config.k},
                   {"max_iter", model.config.max_iter},
                   {"tol", model.config.tol},
                   {"n_init", model.config.n_init},
                   {"seed", model.config.seed}};
    return j.dump(2) + "\n";
}

ClusterModel model_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ClusterModel m;
        const int k = j.at("k").get<int>();
        const int d = j.at("d").get<int>();
        const auto flat = j.at("centroids").get<std::vector<double>>();
        if (k < 1 || d < 0 || flat.size() != static_cast<std::size_t>(k) * static_cast<std::size_t>(d)) {
            throw CorruptFile("cluster model centroid array does not match k x d");
        }
        m.centroids = Eigen::Map<const MatrixD>(flat.data(), k, d);
        m.inertia = j.at("inertia").get<double>();
        m.iterations = j.value("iterations", 0);
        const auto& c = j.at("config");
        m.config.k = c.value("k", k);
        m.config.max_iter = c.value("max_iter", 300);
        m.config.tol = c.value("tol", 1e-4);
        m.config.n_init = c.value("n_init", 10);
        m.config.seed = c.value("seed", j.value("seed", std::uint64_t{42}));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string("malformed cluster model: ") + e.what());
    }
}

std::string representatives_to_json(const Representatives& reps) {
    nlohmann::ordered_json j;
    j["clusters"] = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < reps.per_cluster.size(); ++c) {
        nlohmann::ordered_json cluster;
        cluster["cluster"] = c;
        cluster["members"] = nlohmann::ordered_json::array();
        for (const auto& r : reps.per_cluster[c]) {
            nlohmann::ordered_json e;
            e["record_id"] = r.record_id;
            e["row"] = r.row;
            e["image_path"] = r.image_path;
            e["distance"] = r.distance;
            cluster["members"].push_back(std::move(e));
        }
        j["clusters"].push_back(std::move(cluster));
    }
    return j.dump(2) + "\n";
}

Representatives representatives_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        Representatives reps;
        for (const auto& cluster : j.at("clusters")) {
            std::vector<Representative> members;
            for (const auto& e : cluster.at("members")) {
                Representative r;
                r.record_id = e.at("record_id").get<std::int64_t>();
                r.row = e.at("row").get<std::size_t>();
                r.image_path = e.value("image_path", std::string());
                r.distance = e.at("distance").get<double>();
                members.push_back(std::move(r));
            }
            reps.per_cluster.push_back(std::move(members));
        }
        return reps;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string("malformed representatives file: ") + e.what());
    }
}

}  // namespace vitclust::clustering
