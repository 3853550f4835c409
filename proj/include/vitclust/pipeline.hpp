#pragma once

#include "vitclust/clustering.hpp"
#include "vitclust/quality_metrics.hpp"
#include "vitclust/reduction.hpp"
#include "vitclust/run_manifest.hpp"
#include "vitclust/synthetic.hpp"
#include "vitclust/vit.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace vitclust::pipeline {

namespace fs = std::filesystem;

/// Settings shared by every stage.
struct StageContext {
    fs::path out_dir = ".";
    std::uint64_t seed = 42;
    bool force = false;             // ignore cached outputs
    std::ostream* log = nullptr;    // human-readable progress; null = silent
};

struct StageResult {
    std::vector<fs::path> outputs;
    fs::path run_manifest;
    bool cached = false;
};

// Default artifact names inside the output directory.
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kEmbeddingsFile = "embeddings.embs";
inline constexpr const char* kClusterModelFile = "cluster_model.json";
inline constexpr const char* kAssignmentsFile = "assignments.jsonl";
inline constexpr const char* kMetricsText = "metrics.txt";
inline constexpr const char* kMetricsJson = "metrics.json";
inline constexpr const char* kRepresentativesFile = "representatives.json";
inline constexpr const char* kScatterFile = "scatter.svg";
inline constexpr const char* kReportFile = "report.md";
inline constexpr const char* kSweepDir = "sweep";

fs::path reduced_store_name(int dim);  // reduced_d<dim>.embs

struct IngestOptions {
    fs::path directory;
    std::string source = "local";
    bool dedup = true;
    std::optional<std::size_t> sample;
    fs::path output;  // default: <out>/manifest.json
};

struct EmbedOptions {
    fs::path manifest;          // default: <out>/manifest.json
    fs::path weights;           // VITW0001 file
    std::string random_model;   // "base" | "tiny" | "toy": seeded random weights instead of a file
    bool normalize = true;
    fs::path output;            // default: <out>/embeddings.embs
};

struct ReduceOptions {
    fs::path store;             // default: <out>/embeddings.embs
    std::string method = "umap";  // "umap" | "pca"
    reduction::LayoutConfig layout;
    fs::path output;            // default: <out>/reduced_d<dim>.embs
};

struct ClusterOptions {
    fs::path store;
    clustering::KMeansConfig kmeans;
    fs::path output;            // default: <out>/cluster_model.json (+ assignments.jsonl)
};

struct MetricsOptions {
    std::vector<fs::path> stores;
    std::vector<fs::path> labels;  // assignments.jsonl per store
    metrics::SilhouetteMode silhouette;
    fs::path output;            // default: <out>/metrics.txt (+ metrics.json)
};

struct RepresentativesOptions {
    fs::path store;
    fs::path model;             // default: <out>/cluster_model.json
    std::size_t m = 10;
    fs::path output;            // default: <out>/representatives.json
};

struct SweepOptions {
    fs::path store;             // default: <out>/embeddings.embs
    std::vector<int> dims = {16, 32, 64, 128};
    reduction::LayoutConfig layout;
    clustering::KMeansConfig kmeans;
    metrics::SilhouetteMode silhouette;
};

struct PlotOptions {
    fs::path projection;        // 2-D store
    fs::path labels;            // assignments.jsonl
    std::set<std::int64_t> highlight;
    int width = 900;
    int height = 700;
    double radius = 3.0;
    fs::path output;            // default: <out>/scatter.svg
};

struct ReportOptions {
    fs::path run_dir;           // default: <out>
    std::size_t m = 10;
    fs::path output;            // default: <run_dir>/report.md
};

/// End-to-end chain: ingest, embed, reduce, cluster, metrics,
/// representatives, then a 2-D reduce, plot, and report.
struct RunAllOptions {
    IngestOptions ingest;
    EmbedOptions embed;
    reduction::LayoutConfig layout;  // target_dim is the clustering dimension
    clustering::KMeansConfig kmeans;
    std::size_t m = 10;
    bool plot = true;
};

StageResult run_ingest(const StageContext& ctx, const IngestOptions& opt);
StageResult run_embed(const StageContext& ctx, const EmbedOptions& opt);
StageResult run_reduce(const StageContext& ctx, const ReduceOptions& opt);
StageResult run_cluster(const StageContext& ctx, const ClusterOptions& opt);
StageResult run_metrics(const StageContext& ctx, const MetricsOptions& opt);
StageResult run_representatives(const StageContext& ctx, const RepresentativesOptions& opt);

struct SweepResult {
    StageResult stage;
    std::vector<metrics::MetricsRow> rows;
};
SweepResult run_sweep(const StageContext& ctx, const SweepOptions& opt);

StageResult run_plot(const StageContext& ctx, const PlotOptions& opt);
StageResult run_report(const StageContext& ctx, const ReportOptions& opt);
std::vector<StageResult> run_all(const StageContext& ctx, const RunAllOptions& opt);

/// Gaussian-blob embedding store plus its ground-truth labels, written as
/// <output> and <output minus extension>.truth.jsonl (assignments format).
struct SynthBlobsOptions {
    synthetic::BlobSpec spec;
    fs::path output;            // default: <out>/embeddings.embs
};
StageResult run_synth_blobs(const StageContext& ctx, const SynthBlobsOptions& opt);

/// Striped PNG corpus for exercising ingest and embed.
struct SynthImagesOptions {
    fs::path directory;         // default: <out>/images
    std::size_t count = 60;
    int groups = 3;
    int size = 32;
};
StageResult run_synth_images(const StageContext& ctx, const SynthImagesOptions& opt);

/// Per-row cluster labels keyed by record id.
struct Assignment {
    std::int64_t record_id = 0;
    int cluster = 0;
};
std::vector<Assignment> read_assignments(const fs::path& path);

/// Labels for the rows of a store, matched by record id in row order.
/// Throws AlignmentError on any count or id mismatch.
Labels aligned_labels(const store::Manifest& rows, const std::vector<Assignment>& assignments);

/// Named random-weight configurations used for smoke runs.
vit::ModelConfig model_preset(const std::string& name);

/// Exclusive lock on an output directory (`.vitclust.lock`). Throws
/// LockError while another live process holds it; stale locks left by dead
/// processes are reclaimed.
class OutputLock {
public:
    explicit OutputLock(const fs::path& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
};

}  // namespace vitclust::pipeline
