#include "../oracles/oracles.hpp"
#include "../support.hpp"

#include "vitclust/error.hpp"
#include "vitclust/quality_metrics.hpp"
#include "vitclust/synthetic.hpp"

#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>

using namespace vitclust;
using namespace vitclust::metrics;

namespace {

MatrixD fixture() {
    MatrixD x(4, 1);
    x << 0, 1, 10, 11;
    return x;
}

std::string golden_table() {
    std::ifstream in(std::string(VITCLUST_TEST_DATA) + "/sweep_golden.txt", std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("silhouette on the 4-point fixture") {
    const auto s = silhouette_samples(fixture(), {0, 0, 1, 1});
    CHECK(s[0] == doctest::Approx(19.0 / 21.0));
    CHECK(s[1] == doctest::Approx(17.0 / 19.0));
    CHECK(s[2] == doctest::Approx(17.0 / 19.0));
    CHECK(s[3] == doctest::Approx(19.0 / 21.0));
    CHECK(std::abs(silhouette(fixture(), {0, 0, 1, 1}) - 0.8997) < 1e-4);
}

TEST_CASE("silhouette degenerate cases") {
    MatrixD tight(4, 2);
    tight << 0, 0, 0, 0, 5, 5, 5, 5;
    for (double v : silhouette_samples(tight, {0, 0, 1, 1})) CHECK(v == 1.0);

    Rng rng(1);
    const MatrixD x = testing::gaussian_matrix(5, 2, rng);
    for (double v : silhouette_samples(x, {0, 1, 2, 3, 4})) CHECK(v == 0.0);
    CHECK(silhouette(x, {0, 1, 2, 3, 4}) == 0.0);

    CHECK_THROWS_AS(silhouette(x, {0, 0, 0, 0, 0}), MetricError);
    CHECK_THROWS_AS(silhouette(x.topRows(2), {0, 1}), MetricError);
    CHECK_THROWS_AS(silhouette(x, {0, 1}), MetricError);
}

TEST_CASE("Calinski-Harabasz") {
    CHECK(calinski_harabasz(fixture(), {0, 0, 1, 1}) == doctest::Approx(200.0).epsilon(1e-12));
    MatrixD tight(4, 1);
    tight << 0, 0, 3, 3;
    CHECK(std::isinf(calinski_harabasz(tight, {0, 0, 1, 1})));
    CHECK(calinski_harabasz(2.0 * fixture(), {0, 0, 1, 1}) == doctest::Approx(200.0).epsilon(1e-12));
    CHECK_THROWS_AS(calinski_harabasz(fixture(), {0, 1, 2, 3}), MetricError);
}

TEST_CASE("Davies-Bouldin") {
    CHECK(davies_bouldin(fixture(), {0, 0, 1, 1}) == doctest::Approx(0.1).epsilon(1e-12));
    MatrixD tight(4, 1);
    tight << 0, 0, 3, 3;
    CHECK(davies_bouldin(tight, {0, 0, 1, 1}) == 0.0);
    MatrixD coincident(4, 1);
    coincident << -1, 1, -2, 2;
    try {
        davies_bouldin(coincident, {7, 7, 9, 9});
        FAIL("expected CoincidentCentroids");
    } catch (const CoincidentCentroids& e) {
        const std::string msg = e.what();
        CHECK(msg.find('7') != std::string::npos);
        CHECK(msg.find('9') != std::string::npos);
    }
}

TEST_CASE("metrics agree with brute-force oracles") {
    Rng rng(2);
    for (int t = 0; t < 60; ++t) {
        const std::size_t n = 6 + uniform_index(rng, 59);
        const int k = 2 + static_cast<int>(uniform_index(rng, 5));
        const MatrixD x = testing::gaussian_matrix(n, 1 + uniform_index(rng, 8), rng);
        const Labels labels = testing::covering_labels(n, k, rng);
        const auto rows = testing::to_rows(x);
        CHECK(silhouette(x, labels) == doctest::Approx(oracle::silhouette(rows, labels)).epsilon(1e-9));
        CHECK(calinski_harabasz(x, labels) == doctest::Approx(oracle::calinski_harabasz(rows, labels)).epsilon(1e-9));
        CHECK(davies_bouldin(x, labels) == doctest::Approx(oracle::davies_bouldin(rows, labels)).epsilon(1e-9));
    }
}

TEST_CASE("invariances: label renaming, translation, scaling") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const MatrixD x = testing::gaussian_matrix(40, 3, rng);
        const Labels labels = testing::covering_labels(40, 4, rng);
        Labels renamed(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) renamed[i] = 100 - 7 * labels[i];
        const MatrixD moved = (3.5 * x).rowwise() + Eigen::RowVector3d(10, -4, 2);
        const double s = silhouette(x, labels), ch = calinski_harabasz(x, labels), db = davies_bouldin(x, labels);
        CHECK(silhouette(x, renamed) == doctest::Approx(s).epsilon(1e-12));
        CHECK(calinski_harabasz(x, renamed) == doctest::Approx(ch).epsilon(1e-12));
        CHECK(davies_bouldin(x, renamed) == doctest::Approx(db).epsilon(1e-12));
        CHECK(silhouette(moved, labels) == doctest::Approx(s).epsilon(1e-9));
        CHECK(calinski_harabasz(moved, labels) == doctest::Approx(ch).epsilon(1e-9));
        CHECK(davies_bouldin(moved, labels) == doctest::Approx(db).epsilon(1e-9));
        for (double v : silhouette_samples(x, labels)) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("separated blobs beat a random relabeling") {
    const auto blobs = synthetic::make_blobs(synthetic::BlobSpec{});
    Rng rng(4);
    const Labels random = testing::covering_labels(60, 3, rng);
    CHECK(silhouette(blobs.points, blobs.labels) > silhouette(blobs.points, random));
    CHECK(calinski_harabasz(blobs.points, blobs.labels) > calinski_harabasz(blobs.points, random));
    CHECK(davies_bouldin(blobs.points, blobs.labels) < davies_bouldin(blobs.points, random));
}

TEST_CASE("subsampled silhouette is exact when the sample covers everything") {
    Rng rng(5);
    const MatrixD x = testing::gaussian_matrix(30, 2, rng);
    const Labels labels = testing::covering_labels(30, 3, rng);
    CHECK(silhouette_subsampled(x, labels, 30, 1) == doctest::Approx(silhouette(x, labels)).epsilon(1e-12));
    const double a = silhouette_subsampled(x, labels, 12, 9), b = silhouette_subsampled(x, labels, 12, 9);
    CHECK(a == b);
}

TEST_CASE("formatters") {
    CHECK(format_silhouette(0.0126) == ".0126");
    CHECK(format_silhouette(0.91) == ".9100");
    CHECK(format_silhouette(-0.25) == "-.2500");
    CHECK(format_silhouette(1.0) == "1.0000");
    CHECK(format_ch(925.5) == "925.5");
    CHECK(format_ch(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_db(4.412) == "4.412");
}

TEST_CASE("reference values render to the golden table") {
    const std::vector<MetricsRow> rows{{16, .0126, 925.5, 4.412, "exact", {}},
                                       {32, .0134, 937.5, 4.274, "exact", {}},
                                       {64, .0152, 942.4, 4.164, "exact", {}},
                                       {128, .0151, 944.3, 4.253, "exact", {}}};
    CHECK(best_silhouette_row(rows) == std::optional<std::size_t>(2));
    CHECK(format_table(rows) == golden_table());
}

TEST_CASE("metrics_table on blobs at four dimensions") {
    synthetic::BlobSpec spec;
    spec.dim = 128;
    const auto blobs = synthetic::make_blobs(spec);
    std::map<int, LabeledProjection> by_dim;
    for (int d : {16, 32, 64, 128}) by_dim[d] = {blobs.points.leftCols(d), blobs.labels};
    const auto rows = metrics_table(by_dim);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) CHECK(r.silhouette > 0.7);
    CHECK(rows[0].dim == 16);
    CHECK(rows[3].dim == 128);

    const auto single = metrics_table({{2, {blobs.points.leftCols(2), blobs.labels}}});
    CHECK(single.size() == 1);
}

TEST_CASE("failed rows stay in the table") {
    std::vector<MetricsRow> rows{{16, 0.5, 10.0, 1.0, "exact", {}}, {32, 0, 0, 0, "exact", "TooFewPoints: k > n"}};
    const std::string table = format_table(rows);
    CHECK(table.find("TooFewPoints") != std::string::npos);
    const auto j = nlohmann::json::parse(table_to_json(rows));
    CHECK(j.size() == 2);
    CHECK(j[1].at("error") == "TooFewPoints: k > n");
}
