#include "../support.hpp"

#include "vitclust/embedding_store.hpp"
#include "vitclust/error.hpp"
#include "vitclust/io.hpp"
#include "vitclust/pipeline.hpp"

#include <doctest.h>

#include <fstream>
#include <regex>

using namespace vitclust;
using namespace vitclust::pipeline;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

StageContext context(const fs::path& dir, std::uint64_t seed = 42) {
    StageContext ctx;
    ctx.out_dir = dir;
    ctx.seed = seed;
    return ctx;
}

RunAllOptions small_run(const fs::path& images) {
    RunAllOptions opt;
    opt.ingest.directory = images;
    opt.embed.random_model = "toy";
    opt.layout.target_dim = 4;
    opt.kmeans.k = 3;
    return opt;
}

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

/// 60-image corpus shared by the tests below.
const fs::path& corpus() {
    static testing::TempDir dir("pipeline_corpus");
    static const bool made = [] {
        SynthImagesOptions opt;
        opt.directory = dir / "images";
        opt.count = 60;
        run_synth_images(context(dir.path(), 1), opt);
        return true;
    }();
    (void)made;
    static const fs::path images = dir / "images";
    return images;
}

}  // namespace

TEST_CASE("full chain writes every output with a run manifest") {
    testing::TempDir dir("pipeline_chain");
    const auto results = run_all(context(dir.path()), small_run(corpus()));
    for (const char* name : {"manifest.json", "embeddings.embs", "reduced_d4.embs", "cluster_model.json", "metrics.txt",
                             "representatives.json", "reduced_d2.embs", "scatter.svg", "report.md"}) {
        CHECK_MESSAGE(fs::exists(dir / name), name);
        CHECK_MESSAGE(fs::exists(run_manifest_path(dir / name)), name);
    }
    const auto store = store::read_store(dir / "embeddings.embs");
    CHECK(store.matrix.rows() == 60);
    const RunManifest m = read_run_manifest(run_manifest_path(dir / "cluster_model.json"));
    CHECK(m.subcommand == "cluster");
    CHECK(m.seed == 42);
    CHECK(m.version == version_string());
    CHECK(m.config.at("kmeans").at("k") == 3);
    REQUIRE(m.inputs.size() == 2);
    CHECK(m.inputs[0].sha256 == io::sha256_file(dir / "reduced_d4.embs"));
}

TEST_CASE("separate stages equal one orchestrated run") {
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    testing::TempDir a("pipeline_all"), b("pipeline_steps");
    const RunAllOptions opt = small_run(corpus());
    run_all(context(a.path()), opt);

    const StageContext ctx = context(b.path());
    run_ingest(ctx, opt.ingest);
    run_embed(ctx, opt.embed);
    run_reduce(ctx, ReduceOptions{{}, "umap", opt.layout, {}});
    const fs::path reduced = b / "reduced_d4.embs";
    run_cluster(ctx, ClusterOptions{reduced, opt.kmeans, {}});
    run_metrics(ctx, MetricsOptions{{reduced}, {b / "assignments.jsonl"}, {}, {}});
    run_representatives(ctx, RepresentativesOptions{reduced, {}, 10, {}});
    reduction::LayoutConfig flat = opt.layout;
    flat.target_dim = 2;
    run_reduce(ctx, ReduceOptions{{}, "umap", flat, {}});
    run_plot(ctx, PlotOptions{b / "reduced_d2.embs", b / "assignments.jsonl", {}, 900, 700, 3.0, {}});
    run_report(ctx, ReportOptions{});
    ::unsetenv("SOURCE_DATE_EPOCH");

    for (const char* name : {"manifest.json", "embeddings.embs", "embeddings.embs.jsonl", "reduced_d4.embs",
                             "cluster_model.json", "assignments.jsonl", "metrics.txt", "metrics.json",
                             "representatives.json", "reduced_d2.embs", "scatter.svg", "report.md"}) {
        CHECK_MESSAGE(read_text(a / name) == read_text(b / name), name);
    }
}

TEST_CASE("stages are cached by input hash") {
    testing::TempDir dir("pipeline_cache");
    const StageContext ctx = context(dir.path());
    run_all(ctx, small_run(corpus()));
    ClusterOptions cluster{dir / "reduced_d4.embs", {}, {}};
    cluster.kmeans.k = 3;
    const std::string before = read_text(dir / "cluster_model.json");
    CHECK(run_cluster(ctx, cluster).cached);

    StageContext forced = ctx;
    forced.force = true;
    const StageResult again = run_cluster(forced, cluster);
    CHECK_FALSE(again.cached);
    CHECK(read_text(dir / "cluster_model.json") == before);

    // A changed config invalidates the cache.
    cluster.kmeans.k = 4;
    CHECK_FALSE(run_cluster(ctx, cluster).cached);
    // So does a tampered output.
    cluster.kmeans.k = 3;
    run_cluster(ctx, cluster);
    io::write_file_atomic(dir / "assignments.jsonl", std::string("tampered\n"));
    CHECK_FALSE(run_cluster(ctx, cluster).cached);
}

TEST_CASE("misaligned labels are rejected") {
    testing::TempDir dir("pipeline_align");
    const StageContext ctx = context(dir.path());
    run_all(ctx, small_run(corpus()));
    std::string lines = read_text(dir / "assignments.jsonl");
    lines = lines.substr(lines.find('\n') + 1);  // drop the first row
    io::write_file_atomic(dir / "short.jsonl", lines);
    CHECK_THROWS_AS(run_metrics(ctx, MetricsOptions{{dir / "reduced_d4.embs"}, {dir / "short.jsonl"}, {}, {}}),
                    AlignmentError);
    CHECK_THROWS_AS(run_metrics(ctx, MetricsOptions{{dir / "reduced_d4.embs"}, {}, {}, {}}), ConfigError);
}

TEST_CASE("sweep rows and per-row failures") {
    testing::TempDir dir("pipeline_sweep");
    const StageContext ctx = context(dir.path());
    SynthBlobsOptions blobs;
    blobs.spec.points = 12;
    blobs.spec.dim = 10;
    run_synth_blobs(ctx, blobs);

    SweepOptions opt;
    opt.dims = {2};
    opt.kmeans.k = 3;
    const SweepResult one = run_sweep(ctx, opt);
    REQUIRE(one.rows.size() == 1);
    CHECK_FALSE(one.rows[0].error.has_value());
    CHECK(fs::exists(dir / "sweep" / "d2" / "cluster_model.json"));

    opt.dims = {2, 3};
    opt.kmeans.k = 20;
    StageContext forced = ctx;
    forced.force = true;
    const SweepResult failed = run_sweep(forced, opt);
    REQUIRE(failed.rows.size() == 2);
    for (const auto& r : failed.rows) {
        REQUIRE(r.error.has_value());
        CHECK(r.error->find("TooFewPoints") == 0);
    }
    CHECK(count(read_text(dir / "sweep" / "metrics.txt"), "TooFewPoints") == 2);
}

TEST_CASE("report structure and saturation") {
    testing::TempDir dir("pipeline_report");
    const StageContext ctx = context(dir.path());
    run_all(ctx, small_run(corpus()));
    const std::string report = read_text(dir / "report.md");
    CHECK(count(report, "\n## Cluster ") == 3);
    CHECK(report.find("scatter.svg") != std::string::npos);
    CHECK(report.find("Silhouette") != std::string::npos);

    StageContext forced = ctx;
    forced.force = true;
    run_report(forced, ReportOptions{{}, 1, {}});
    const std::string one = read_text(dir / "report.md");
    CHECK(count(one, "\n| 1 |") == 3);
    CHECK(count(one, "\n| 2 |") == 0);
}

TEST_CASE("report lists no more than a cluster's members") {
    testing::TempDir dir("pipeline_small_cluster");
    const StageContext ctx = context(dir.path());
    SynthBlobsOptions blobs;
    blobs.spec.points = 12;
    blobs.spec.dim = 6;
    blobs.spec.blobs = 2;
    run_synth_blobs(ctx, blobs);
    // Two far-apart groups; k = 3 splits one of them, and a 12-point set
    // yields at least one small cluster.
    ClusterOptions cluster{dir / "embeddings.embs", {}, {}};
    cluster.kmeans.k = 3;
    run_cluster(ctx, cluster);
    run_metrics(ctx, MetricsOptions{{dir / "embeddings.embs"}, {dir / "assignments.jsonl"}, {}, {}});
    run_representatives(ctx, RepresentativesOptions{dir / "embeddings.embs", {}, 10, {}});
    run_report(ctx, ReportOptions{});
    const auto model = nlohmann::json::parse(read_text(dir / "cluster_model.json"));
    const std::string report = read_text(dir / "report.md");
    std::size_t listed = 0;
    for (const auto& c : model.at("clusters")) listed += std::min<std::size_t>(10, c.at("size").get<std::size_t>());
    CHECK(count(report, ".png") + count(report, "| blob") == listed);
}

TEST_CASE("report names missing stage outputs") {
    testing::TempDir dir("pipeline_report_missing");
    try {
        run_report(context(dir.path()), ReportOptions{});
        FAIL("expected ReportError");
    } catch (const ReportError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("cluster_model.json") != std::string::npos);
        CHECK(msg.find("representatives.json") != std::string::npos);
    }
}

TEST_CASE("plot requires a 2-D projection") {
    testing::TempDir dir("pipeline_plot");
    const StageContext ctx = context(dir.path());
    run_all(ctx, small_run(corpus()));
    CHECK_THROWS_AS(run_plot(ctx, PlotOptions{dir / "reduced_d4.embs", dir / "assignments.jsonl", {}, 900, 700, 3, {}}),
                    DimensionError);
}

TEST_CASE("embed options are validated") {
    testing::TempDir dir("pipeline_embed");
    const StageContext ctx = context(dir.path());
    run_ingest(ctx, IngestOptions{corpus(), "local", true, {}, {}});
    CHECK_THROWS_AS(run_embed(ctx, EmbedOptions{}), ConfigError);
    EmbedOptions both;
    both.random_model = "toy";
    both.weights = dir / "w.vitw";
    CHECK_THROWS_AS(run_embed(ctx, both), ConfigError);
    CHECK_THROWS_AS(model_preset("huge"), ConfigError);
}

TEST_CASE("output lock excludes a second holder and reclaims stale locks") {
    testing::TempDir dir("pipeline_lock");
    {
        OutputLock first(dir.path());
        CHECK(fs::exists(dir / ".vitclust.lock"));
        CHECK_THROWS_AS(OutputLock(dir.path()), LockError);
    }
    CHECK_FALSE(fs::exists(dir / ".vitclust.lock"));
    // A pid that cannot be running.
    io::write_file_atomic(dir / ".vitclust.lock", std::string("999999999\n"));
    CHECK_NOTHROW(OutputLock(dir.path()));
}

TEST_CASE("assignment files are parsed strictly") {
    testing::TempDir dir("pipeline_assign");
    io::write_file_atomic(dir / "a.jsonl", std::string("{\"record_id\": 3, \"cluster\": 1}\nnot json\n"));
    CHECK_THROWS_AS(read_assignments(dir / "a.jsonl"), CorruptFile);
}
