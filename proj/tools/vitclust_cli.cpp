#include "vitclust/error.hpp"
#include "vitclust/parallel.hpp"
#include "vitclust/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

namespace fs = std::filesystem;
namespace pl = vitclust::pipeline;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kInternal = 4 };

int report_error(const std::string& kind, const std::string& message, int code) {
    nlohmann::ordered_json j{{"error", kind}, {"message", message}, {"exit_code", code}};
    std::cerr << j.dump() << std::endl;
    return code;
}

std::vector<int> parse_dims(const std::string& text) {
    std::vector<int> dims;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        int value = 0;
        try {
            value = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || value < 1) throw vitclust::ConfigError("bad dimension '" + item + "' in --dims");
        dims.push_back(value);
    }
    if (dims.empty()) throw vitclust::ConfigError("--dims is empty");
    return dims;
}

void add_layout_options(CLI::App* cmd, vitclust::reduction::LayoutConfig& c, std::string& init) {
    cmd->add_option("--neighbors", c.n_neighbors, "kNN graph size")->capture_default_str();
    cmd->add_option("--min-dist", c.min_dist, "minimum embedded distance")->capture_default_str();
    cmd->add_option("--spread", c.spread)->capture_default_str();
    cmd->add_option("--epochs", c.epochs)->capture_default_str();
    cmd->add_option("--learning-rate", c.learning_rate)->capture_default_str();
    cmd->add_option("--negative-samples", c.negative_samples)->capture_default_str();
    cmd->add_option("--init", init, "spectral or random")
        ->check(CLI::IsMember({"spectral", "random"}))
        ->capture_default_str();
    cmd->add_flag("--parallel", c.parallel, "lock-free parallel layout (not bit-reproducible)");
}

void add_kmeans_options(CLI::App* cmd, vitclust::clustering::KMeansConfig& c) {
    cmd->add_option("--k", c.k, "number of clusters")->capture_default_str();
    cmd->add_option("--max-iter", c.max_iter)->capture_default_str();
    cmd->add_option("--tol", c.tol, "relative inertia improvement to stop at")->capture_default_str();
    cmd->add_option("--n-init", c.n_init, "k-means++ restarts")->capture_default_str();
}

vitclust::reduction::InitMethod init_method(const std::string& name) {
    return name == "random" ? vitclust::reduction::InitMethod::Random : vitclust::reduction::InitMethod::Spectral;
}

void print_outputs(const pl::StageResult& r) {
    for (const auto& p : r.outputs) std::cout << p.generic_string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cluster images by their ViT embeddings"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key = value configuration file");
    app.set_version_flag("--version", pl::version_string());

    std::uint64_t seed = 42;
    unsigned threads = 1;
    std::string out_dir = ".";
    bool force = false;
    bool quiet = false;
    app.add_option("--seed", seed, "seed for every stochastic stage")->capture_default_str();
    app.add_option("--threads", threads, "worker threads")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_flag("--force", force, "ignore cached outputs");
    app.add_flag("-q,--quiet", quiet, "no progress messages");

    pl::IngestOptions ingest;
    std::size_t sample_n = 0;
    bool no_dedup = false;
    auto* c_ingest = app.add_subcommand("ingest", "build a post manifest from an image directory");
    c_ingest->add_option("dir", ingest.directory, "image directory")->required();
    c_ingest->add_option("--source", ingest.source)->capture_default_str();
    c_ingest->add_flag("--no-dedup", no_dedup, "keep byte-identical duplicates");
    c_ingest->add_option("--sample", sample_n, "keep a uniform sample of this many records");
    c_ingest->add_option("-o,--output", ingest.output);

    pl::EmbedOptions embed;
    bool no_normalize = false;
    auto* c_embed = app.add_subcommand("embed", "compute ViT embeddings for a manifest");
    c_embed->add_option("--manifest", embed.manifest);
    c_embed->add_option("--weights", embed.weights, "weight file");
    c_embed->add_option("--random-model", embed.random_model, "seeded random weights: base, tiny or toy")
        ->check(CLI::IsMember({"base", "tiny", "toy"}));
    c_embed->add_flag("--no-normalize", no_normalize, "store raw class-token embeddings");
    c_embed->add_option("-o,--output", embed.output);

    pl::ReduceOptions reduce;
    std::string reduce_init = "spectral";
    auto* c_reduce = app.add_subcommand("reduce", "project a store to fewer dimensions");
    c_reduce->add_option("--store", reduce.store);
    c_reduce->add_option("--dim", reduce.layout.target_dim, "target dimension")->capture_default_str();
    c_reduce->add_option("--method", reduce.method)->check(CLI::IsMember({"umap", "pca"}))->capture_default_str();
    add_layout_options(c_reduce, reduce.layout, reduce_init);
    c_reduce->add_option("-o,--output", reduce.output);

    pl::ClusterOptions cluster;
    auto* c_cluster = app.add_subcommand("cluster", "k-means on a store");
    c_cluster->add_option("--store", cluster.store)->required();
    add_kmeans_options(c_cluster, cluster.kmeans);
    c_cluster->add_option("-o,--output", cluster.output);

    pl::MetricsOptions metrics;
    auto* c_metrics = app.add_subcommand("metrics", "silhouette, C-H and D-B per store");
    c_metrics->add_option("--store", metrics.stores, "store (repeatable)")->required();
    c_metrics->add_option("--labels", metrics.labels, "assignments.jsonl (repeatable, one per store)")->required();
    c_metrics->add_option("--silhouette-sample", metrics.silhouette.sample_size, "0 = exact");
    c_metrics->add_option("-o,--output", metrics.output);

    pl::SweepOptions sweep;
    std::string sweep_dims = "16,32,64,128";
    std::string sweep_init = "spectral";
    auto* c_sweep = app.add_subcommand("sweep", "reduce, cluster and score at several dimensions");
    c_sweep->add_option("--store", sweep.store);
    c_sweep->add_option("--dims", sweep_dims, "comma-separated target dimensions")->capture_default_str();
    add_layout_options(c_sweep, sweep.layout, sweep_init);
    add_kmeans_options(c_sweep, sweep.kmeans);
    c_sweep->add_option("--silhouette-sample", sweep.silhouette.sample_size, "0 = exact");

    pl::RepresentativesOptions reps;
    auto* c_reps = app.add_subcommand("representatives", "nearest posts to each centroid");
    c_reps->add_option("--store", reps.store)->required();
    c_reps->add_option("--model", reps.model);
    c_reps->add_option("--m", reps.m, "posts per cluster")->capture_default_str();
    c_reps->add_option("-o,--output", reps.output);

    pl::PlotOptions plot;
    std::vector<std::int64_t> highlight;
    auto* c_plot = app.add_subcommand("plot", "SVG scatter of a 2-D projection");
    c_plot->add_option("--projection", plot.projection)->required();
    c_plot->add_option("--labels", plot.labels)->required();
    c_plot->add_option("--highlight", highlight, "record ids to ring")->delimiter(',');
    c_plot->add_option("--width", plot.width)->capture_default_str();
    c_plot->add_option("--height", plot.height)->capture_default_str();
    c_plot->add_option("--radius", plot.radius)->capture_default_str();
    c_plot->add_option("-o,--output", plot.output);

    pl::ReportOptions report;
    auto* c_report = app.add_subcommand("report", "markdown summary of a run directory");
    c_report->add_option("--run-dir", report.run_dir);
    c_report->add_option("--m", report.m)->capture_default_str();
    c_report->add_option("-o,--output", report.output);

    pl::RunAllOptions all;
    std::string all_init = "spectral";
    std::size_t all_sample = 0;
    bool all_no_plot = false;
    auto* c_run = app.add_subcommand("run", "every stage in order");
    c_run->add_option("dir", all.ingest.directory, "image directory")->required();
    c_run->add_option("--weights", all.embed.weights);
    c_run->add_option("--random-model", all.embed.random_model)->check(CLI::IsMember({"base", "tiny", "toy"}));
    c_run->add_option("--sample", all_sample);
    c_run->add_option("--dim", all.layout.target_dim, "clustering dimension")->capture_default_str();
    add_layout_options(c_run, all.layout, all_init);
    add_kmeans_options(c_run, all.kmeans);
    c_run->add_option("--m", all.m)->capture_default_str();
    c_run->add_flag("--no-plot", all_no_plot, "skip the 2-D projection, scatter and report");

    pl::SynthBlobsOptions blobs;
    pl::SynthImagesOptions images;
    auto* c_synth = app.add_subcommand("synth", "generate synthetic fixtures");
    c_synth->require_subcommand(1);
    auto* c_blobs = c_synth->add_subcommand("blobs", "Gaussian-blob embedding store with truth labels");
    c_blobs->add_option("--points", blobs.spec.points)->capture_default_str();
    c_blobs->add_option("--dim", blobs.spec.dim)->capture_default_str();
    c_blobs->add_option("--blobs", blobs.spec.blobs)->capture_default_str();
    c_blobs->add_option("--sigma", blobs.spec.sigma)->capture_default_str();
    c_blobs->add_option("--min-distance", blobs.spec.min_center_distance)->capture_default_str();
    c_blobs->add_option("-o,--output", blobs.output);
    auto* c_images = c_synth->add_subcommand("images", "striped PNG corpus");
    c_images->add_option("--count", images.count)->capture_default_str();
    c_images->add_option("--groups", images.groups)->capture_default_str();
    c_images->add_option("--size", images.size)->capture_default_str();
    c_images->add_option("-o,--output", images.directory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("UsageError", e.what(), kUsage);
    }

    try {
        vitclust::set_num_threads(threads);
        pl::StageContext ctx;
        ctx.out_dir = out_dir;
        ctx.seed = seed;
        ctx.force = force;
        ctx.log = quiet ? nullptr : &std::cerr;
        pl::OutputLock lock(ctx.out_dir);

        if (*c_ingest) {
            ingest.dedup = !no_dedup;
            if (sample_n > 0) ingest.sample = sample_n;
            print_outputs(pl::run_ingest(ctx, ingest));
        } else if (*c_embed) {
            embed.normalize = !no_normalize;
            print_outputs(pl::run_embed(ctx, embed));
        } else if (*c_reduce) {
            reduce.layout.init = init_method(reduce_init);
            print_outputs(pl::run_reduce(ctx, reduce));
        } else if (*c_cluster) {
            print_outputs(pl::run_cluster(ctx, cluster));
        } else if (*c_metrics) {
            const auto r = pl::run_metrics(ctx, metrics);
            std::cout << std::string(std::istreambuf_iterator<char>(std::ifstream(r.outputs.front()).rdbuf()), {});
        } else if (*c_sweep) {
            sweep.dims = parse_dims(sweep_dims);
            sweep.layout.init = init_method(sweep_init);
            const auto r = pl::run_sweep(ctx, sweep);
            std::cout << std::string(std::istreambuf_iterator<char>(std::ifstream(r.stage.outputs.front()).rdbuf()),
                                     {});
        } else if (*c_reps) {
            print_outputs(pl::run_representatives(ctx, reps));
        } else if (*c_plot) {
            plot.highlight.insert(highlight.begin(), highlight.end());
            print_outputs(pl::run_plot(ctx, plot));
        } else if (*c_report) {
            print_outputs(pl::run_report(ctx, report));
        } else if (*c_run) {
            all.layout.init = init_method(all_init);
            all.plot = !all_no_plot;
            if (all_sample > 0) all.ingest.sample = all_sample;
            for (const auto& r : pl::run_all(ctx, all)) print_outputs(r);
        } else if (*c_blobs) {
            print_outputs(pl::run_synth_blobs(ctx, blobs));
        } else if (*c_images) {
            print_outputs(pl::run_synth_images(ctx, images));
        }
    } catch (const vitclust::ConfigError& e) {
        return report_error(e.kind(), e.what(), kUsage);
    } catch (const vitclust::Error& e) {
        return report_error(e.kind(), e.what(), kData);
    } catch (const std::exception& e) {
        return report_error("InternalError", e.what(), kInternal);
    }
    return kOk;
}
