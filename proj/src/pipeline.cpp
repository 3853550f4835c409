#include "vitclust/pipeline.hpp"

#include "vitclust/embedding_store.hpp"
#include "vitclust/error.hpp"
#include "vitclust/image.hpp"
#include "vitclust/io.hpp"
#include "vitclust/parallel.hpp"
#include "vitclust/scatter_plot.hpp"
#include "vitclust/weights_io.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

namespace vitclust::pipeline {

using nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

fs::path or_default(const fs::path& given, const fs::path& fallback) { return given.empty() ? fallback : given; }

void log_line(const StageContext& ctx, const std::string& text) {
    if (ctx.log) *ctx.log << text << "\n";
}

void ensure_parent(const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::string read_text(const fs::path& path) {
    const auto bytes = io::read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

/// Shared bookkeeping: cache check on entry, run manifest on exit.
class StageRun {
public:
    StageRun(const StageContext& ctx, std::string subcommand, fs::path primary, ordered_json config,
             std::vector<fs::path> inputs)
        : ctx_(ctx),
          subcommand_(std::move(subcommand)),
          primary_(std::move(primary)),
          config_(std::move(config)),
          inputs_(std::move(inputs)),
          start_(Clock::now()) {
        started_ = store::timestamp_now();
    }

    bool cached() const {
        return !ctx_.force && is_cached(primary_, subcommand_, config_, inputs_);
    }

    StageResult cached_result() const {
        log_line(ctx_, subcommand_ + ": up to date (" + primary_.string() + ")");
        StageResult r;
        r.cached = true;
        r.run_manifest = run_manifest_path(primary_);
        for (const auto& out : read_run_manifest(r.run_manifest).outputs) r.outputs.emplace_back(out.path);
        return r;
    }

    ordered_json& notes() { return notes_; }

    StageResult finish(const std::vector<fs::path>& outputs) {
        RunManifest m;
        m.subcommand = subcommand_;
        m.config = config_;
        for (const auto& in : inputs_) m.inputs.push_back(digest(in));
        for (const auto& out : outputs) m.outputs.push_back(digest(out));
        m.seed = ctx_.seed;
        m.started = started_;
        m.duration_seconds = std::chrono::duration<double>(Clock::now() - start_).count();
        m.notes = notes_;
        write_run_manifest(m, primary_);
        log_line(ctx_, subcommand_ + ": wrote " + primary_.string());
        return StageResult{outputs, run_manifest_path(primary_), false};
    }

private:
    const StageContext& ctx_;
    std::string subcommand_;
    fs::path primary_;
    ordered_json config_;
    std::vector<fs::path> inputs_;
    Clock::time_point start_;
    std::string started_;
    ordered_json notes_ = ordered_json::object();
};

ordered_json layout_json(const reduction::LayoutConfig& c) {
    ordered_json j;
    j["n_neighbors"] = c.n_neighbors;
    j["min_dist"] = c.min_dist;
    j["spread"] = c.spread;
    j["target_dim"] = c.target_dim;
    j["epochs"] = c.epochs;
    j["learning_rate"] = c.learning_rate;
    j["negative_samples"] = c.negative_samples;
    if (c.curve) j["curve"] = {{"a", c.curve->a}, {"b", c.curve->b}};
    j["init"] = c.init == reduction::InitMethod::Spectral ? "spectral" : "random";
    j["parallel"] = c.parallel;
    j["seed"] = c.seed;
    return j;
}

ordered_json kmeans_json(const clustering::KMeansConfig& c) {
    return ordered_json{{"k", c.k}, {"max_iter", c.max_iter}, {"tol", c.tol}, {"n_init", c.n_init}, {"seed", c.seed}};
}

ordered_json silhouette_json(const metrics::SilhouetteMode& s) {
    return ordered_json{{"sample_size", s.sample_size}, {"seed", s.seed}};
}

MatrixD to_double(const MatrixF& m) { return m.cast<double>(); }

store::StoreContents load_store(const fs::path& path) { return store::read_store(path); }

void write_assignments(const fs::path& path, const store::Manifest& rows, const Labels& labels) {
    std::string text;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows.records[i];
        ordered_json j;
        j["record_id"] = r.record_id;
        j["source"] = r.source;
        j["image_path"] = r.image_path;
        j["content_hash"] = r.content_hash;
        j["cluster"] = labels[i];
        text += j.dump() + "\n";
    }
    io::write_file_atomic(path, text);
}

/// Per-cluster sizes and inertia, stored alongside the model for reports.
ordered_json cluster_breakdown(const MatrixD& points, const clustering::ClusterModel& model) {
    std::vector<std::size_t> sizes(model.k(), 0);
    std::vector<double> within(model.k(), 0.0);
    for (std::size_t i = 0; i < model.assignments.size(); ++i) {
        const int c = model.assignments[i];
        ++sizes[c];
        within[c] += (points.row(static_cast<Eigen::Index>(i)) - model.centroids.row(c)).squaredNorm();
    }
    ordered_json arr = ordered_json::array();
    for (int c = 0; c < model.k(); ++c) arr.push_back({{"cluster", c}, {"size", sizes[c]}, {"inertia", within[c]}});
    return arr;
}

clustering::ClusterModel cluster_points(const MatrixD& points, const clustering::KMeansConfig& cfg) {
    return clustering::fit(points, cfg);
}

MatrixD reduce_points(const MatrixD& points, const std::string& method, const reduction::LayoutConfig& layout,
                      ordered_json* notes) {
    if (method == "pca") return reduction::pca(points, layout.target_dim);
    if (method != "umap") throw ConfigError("unknown reduction method '" + method + "'");
    reduction::UmapReport report;
    MatrixD out = reduction::umap(points, layout, &report);
    if (notes) {
        (*notes)["effective_neighbors"] = report.effective_neighbors;
        (*notes)["curve"] = {{"a", report.curve.a}, {"b", report.curve.b}};
        (*notes)["init_used"] = report.init_used;
        (*notes)["graph_edges"] = report.edges;
    }
    return out;
}

}  // namespace

fs::path reduced_store_name(int dim) { return "reduced_d" + std::to_string(dim) + ".embs"; }

vit::ModelConfig model_preset(const std::string& name) {
    vit::ModelConfig c;
    if (name == "base") return c;
    if (name == "tiny") {
        c.image_size = 64;
        c.patch_size = 16;
        c.hidden_dim = 192;
        c.num_layers = 2;
        c.num_heads = 3;
        c.mlp_dim = 768;
        return c;
    }
    if (name == "toy") {
        c.image_size = 32;
        c.patch_size = 16;
        c.hidden_dim = 8;
        c.num_layers = 1;
        c.num_heads = 2;
        c.mlp_dim = 16;
        return c;
    }
    throw ConfigError("unknown model preset '" + name + "' (expected base, tiny or toy)");
}

std::vector<Assignment> read_assignments(const fs::path& path) {
    std::istringstream lines(read_text(path));
    std::vector<Assignment> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("record_id").get<std::int64_t>(), j.at("cluster").get<int>()});
        } catch (const nlohmann::json::exception& e) {
            throw CorruptFile(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

Labels aligned_labels(const store::Manifest& rows, const std::vector<Assignment>& assignments) {
    if (rows.size() != assignments.size()) {
        throw AlignmentError("labels have " + std::to_string(assignments.size()) + " rows, store has " +
                             std::to_string(rows.size()));
    }
    Labels labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows.records[i].record_id != assignments[i].record_id) {
            throw AlignmentError("row " + std::to_string(i) + ": store record " +
                                 std::to_string(rows.records[i].record_id) + " vs label record " +
                                 std::to_string(assignments[i].record_id));
        }
        labels[i] = assignments[i].cluster;
    }
    return labels;
}

StageResult run_ingest(const StageContext& ctx, const IngestOptions& opt) {
    if (opt.directory.empty()) throw ConfigError("ingest needs an input directory");
    const fs::path out = or_default(opt.output, ctx.out_dir / kManifestFile);
    ordered_json config{{"directory", opt.directory.generic_string()},
                        {"source", opt.source},
                        {"dedup", opt.dedup},
                        {"sample", opt.sample ? ordered_json(*opt.sample) : ordered_json(nullptr)},
                        {"seed", ctx.seed}};
    // Directory contents are not hashed as inputs, so ingest always reruns.
    StageRun run(ctx, "ingest", out, config, {});

    std::vector<std::pair<std::string, std::string>> skipped;
    store::Manifest m = store::ingest(opt.directory, opt.source, [&](const fs::path& p, const std::string& why) {
        skipped.emplace_back(p.generic_string(), why);
        log_line(ctx, "ingest: skipped " + p.generic_string() + " (" + why + ")");
    });
    const std::size_t found = m.size();
    if (opt.dedup) m = store::deduplicate(m);
    const std::size_t unique = m.size();
    if (opt.sample) m = store::sample(m, *opt.sample, ctx.seed);

    ensure_parent(out);
    io::write_file_atomic(out, store::manifest_to_json(m));
    run.notes()["decodable"] = found;
    run.notes()["after_dedup"] = unique;
    run.notes()["records"] = m.size();
    ordered_json skips = ordered_json::array();
    for (const auto& [p, why] : skipped) skips.push_back({{"path", p}, {"reason", why}});
    run.notes()["skipped"] = skips;
    return run.finish({out});
}

StageResult run_embed(const StageContext& ctx, const EmbedOptions& opt) {
    const fs::path manifest_path = or_default(opt.manifest, ctx.out_dir / kManifestFile);
    const fs::path out = or_default(opt.output, ctx.out_dir / kEmbeddingsFile);
    if (opt.weights.empty() == opt.random_model.empty()) {
        throw ConfigError("embed needs exactly one of --weights or --random-model");
    }
    std::vector<fs::path> inputs{manifest_path};
    if (!opt.weights.empty()) inputs.push_back(opt.weights);
    ordered_json config{{"manifest", manifest_path.generic_string()},
                        {"weights", opt.weights.generic_string()},
                        {"random_model", opt.random_model},
                        {"normalize", opt.normalize},
                        {"seed", ctx.seed}};
    StageRun run(ctx, "embed", out, config, inputs);
    if (run.cached()) return run.cached_result();

    const store::Manifest manifest = store::manifest_from_json(read_text(manifest_path));
    const vit::ModelWeights weights = opt.weights.empty()
                                          ? vit::random_weights(model_preset(opt.random_model), ctx.seed)
                                          : vit::load_weights(opt.weights);
    const int dim = weights.config.hidden_dim;

    store::EmbeddingMatrix matrix;
    matrix.values.resize(static_cast<Eigen::Index>(manifest.size()), dim);
    matrix.normalized = opt.normalize;
    std::vector<std::string> failures(manifest.size());
    parallel_for(manifest.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                const auto bytes = io::read_file(manifest.records[i].image_path);
                const ImageTensor image = preprocess(bytes, weights.config.image_size);
                vit::Embedding e = vit::forward(image, weights);
                if (opt.normalize) e = vit::normalize(e);
                matrix.values.row(static_cast<Eigen::Index>(i)) = e.values.transpose();
            } catch (const Error& err) {
                failures[i] = err.kind() + ": " + err.what();
            }
        }
    });
    for (std::size_t i = 0; i < failures.size(); ++i) {
        if (!failures[i].empty()) {
            throw DecodeError("record " + std::to_string(manifest.records[i].record_id) + " (" +
                              manifest.records[i].image_path + "): " + failures[i]);
        }
    }

    ensure_parent(out);
    store::write_store(matrix, manifest, out);
    run.notes()["rows"] = manifest.size();
    run.notes()["dim"] = dim;
    return run.finish({out, store::sidecar_path(out)});
}

StageResult run_reduce(const StageContext& ctx, const ReduceOptions& opt) {
    const fs::path in = or_default(opt.store, ctx.out_dir / kEmbeddingsFile);
    const fs::path out = or_default(opt.output, ctx.out_dir / reduced_store_name(opt.layout.target_dim));
    reduction::LayoutConfig layout = opt.layout;
    layout.seed = ctx.seed;
    ordered_json config{{"store", in.generic_string()}, {"method", opt.method}, {"layout", layout_json(layout)}};
    StageRun run(ctx, "reduce", out, config, {in, store::sidecar_path(in)});
    if (run.cached()) return run.cached_result();

    const store::StoreContents source = load_store(in);
    if (opt.method == "umap") layout.validate(source.matrix.dim());
    const MatrixD projected = reduce_points(to_double(source.matrix.values), opt.method, layout, &run.notes());

    store::EmbeddingMatrix reduced;
    reduced.values = projected.cast<float>();
    ensure_parent(out);
    store::write_store(reduced, source.manifest, out);
    return run.finish({out, store::sidecar_path(out)});
}

StageResult run_cluster(const StageContext& ctx, const ClusterOptions& opt) {
    if (opt.store.empty()) throw ConfigError("cluster needs --store");
    const fs::path out = or_default(opt.output, ctx.out_dir / kClusterModelFile);
    const fs::path assignments = out.parent_path() / kAssignmentsFile;
    clustering::KMeansConfig cfg = opt.kmeans;
    cfg.seed = ctx.seed;
    ordered_json config{{"store", opt.store.generic_string()}, {"kmeans", kmeans_json(cfg)}};
    StageRun run(ctx, "cluster", out, config, {opt.store, store::sidecar_path(opt.store)});
    if (run.cached()) return run.cached_result();

    const store::StoreContents source = load_store(opt.store);
    const MatrixD points = to_double(source.matrix.values);
    const clustering::ClusterModel model = cluster_points(points, cfg);

    auto model_doc = ordered_json::parse(clustering::model_to_json(model));
    model_doc["clusters"] = cluster_breakdown(points, model);
    ensure_parent(out);
    io::write_file_atomic(out, model_doc.dump(2) + "\n");
    write_assignments(assignments, source.manifest, model.assignments);
    run.notes()["inertia"] = model.inertia;
    run.notes()["iterations"] = model.iterations;
    return run.finish({out, assignments});
}

StageResult run_metrics(const StageContext& ctx, const MetricsOptions& opt) {
    if (opt.stores.empty() || opt.stores.size() != opt.labels.size()) {
        throw ConfigError("metrics needs matching --store and --labels lists");
    }
    const fs::path out = or_default(opt.output, ctx.out_dir / kMetricsText);
    const fs::path out_json = fs::path(out).replace_extension(".json");
    std::vector<fs::path> inputs;
    ordered_json pairs = ordered_json::array();
    for (std::size_t i = 0; i < opt.stores.size(); ++i) {
        inputs.push_back(opt.stores[i]);
        inputs.push_back(store::sidecar_path(opt.stores[i]));
        inputs.push_back(opt.labels[i]);
        pairs.push_back({{"store", opt.stores[i].generic_string()}, {"labels", opt.labels[i].generic_string()}});
    }
    ordered_json config{{"inputs", pairs}, {"silhouette", silhouette_json(opt.silhouette)}};
    StageRun run(ctx, "metrics", out, config, inputs);
    if (run.cached()) return run.cached_result();

    std::map<int, metrics::LabeledProjection> by_dim;
    for (std::size_t i = 0; i < opt.stores.size(); ++i) {
        const store::StoreContents s = load_store(opt.stores[i]);
        const Labels labels = aligned_labels(s.manifest, read_assignments(opt.labels[i]));
        const int dim = static_cast<int>(s.matrix.dim());
        if (by_dim.count(dim)) throw ConfigError("two metric inputs share dimension " + std::to_string(dim));
        by_dim.emplace(dim, metrics::LabeledProjection{to_double(s.matrix.values), labels});
    }
    const auto rows = metrics::metrics_table(by_dim, opt.silhouette);
    ensure_parent(out);
    io::write_file_atomic(out, metrics::format_table(rows));
    io::write_file_atomic(out_json, metrics::table_to_json(rows));
    return run.finish({out, out_json});
}

StageResult run_representatives(const StageContext& ctx, const RepresentativesOptions& opt) {
    if (opt.store.empty()) throw ConfigError("representatives needs --store");
    const fs::path model_path = or_default(opt.model, ctx.out_dir / kClusterModelFile);
    const fs::path out = or_default(opt.output, ctx.out_dir / kRepresentativesFile);
    ordered_json config{{"store", opt.store.generic_string()}, {"model", model_path.generic_string()}, {"m", opt.m}};
    StageRun run(ctx, "representatives", out, config, {opt.store, store::sidecar_path(opt.store), model_path});
    if (run.cached()) return run.cached_result();

    const store::StoreContents s = load_store(opt.store);
    const clustering::ClusterModel model = clustering::model_from_json(read_text(model_path));
    const auto reps = clustering::representatives(to_double(s.matrix.values), s.manifest, model.centroids, opt.m);
    ensure_parent(out);
    io::write_file_atomic(out, clustering::representatives_to_json(reps));
    return run.finish({out});
}

SweepResult run_sweep(const StageContext& ctx, const SweepOptions& opt) {
    const fs::path in = or_default(opt.store, ctx.out_dir / kEmbeddingsFile);
    const fs::path dir = ctx.out_dir / kSweepDir;
    const fs::path out = dir / kMetricsText;
    const fs::path out_json = dir / kMetricsJson;
    reduction::LayoutConfig layout = opt.layout;
    layout.seed = ctx.seed;
    clustering::KMeansConfig kmeans = opt.kmeans;
    kmeans.seed = ctx.seed;
    std::vector<int> dims = opt.dims;
    std::sort(dims.begin(), dims.end());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
    ordered_json config{{"store", in.generic_string()},
                        {"dims", dims},
                        {"layout", layout_json(layout)},
                        {"kmeans", kmeans_json(kmeans)},
                        {"silhouette", silhouette_json(opt.silhouette)}};
    StageRun run(ctx, "sweep", out, config, {in, store::sidecar_path(in)});

    SweepResult result;
    if (run.cached()) {
        result.stage = run.cached_result();
        return result;
    }

    const store::StoreContents source = load_store(in);
    const MatrixD points = to_double(source.matrix.values);
    std::vector<fs::path> outputs;
    ordered_json per_dim = ordered_json::object();
    for (int dim : dims) {
        metrics::MetricsRow row;
        row.dim = dim;
        row.silhouette_mode = opt.silhouette.describe(source.manifest.size());
        try {
            reduction::LayoutConfig cfg = layout;
            cfg.target_dim = dim;
            cfg.validate(source.matrix.dim());
            ordered_json notes;
            const MatrixD projected = reduce_points(points, "umap", cfg, &notes);
            const clustering::ClusterModel model = cluster_points(projected, kmeans);

            const fs::path dim_dir = dir / ("d" + std::to_string(dim));
            fs::create_directories(dim_dir);
            store::EmbeddingMatrix reduced;
            reduced.values = projected.cast<float>();
            const fs::path store_out = dim_dir / "reduced.embs";
            store::write_store(reduced, source.manifest, store_out);
            auto model_doc = ordered_json::parse(clustering::model_to_json(model));
            model_doc["clusters"] = cluster_breakdown(projected, model);
            io::write_file_atomic(dim_dir / kClusterModelFile, model_doc.dump(2) + "\n");
            write_assignments(dim_dir / kAssignmentsFile, source.manifest, model.assignments);
            outputs.insert(outputs.end(), {store_out, store::sidecar_path(store_out), dim_dir / kClusterModelFile,
                                           dim_dir / kAssignmentsFile});

            // Scores use the stored float32 projection so the table matches
            // what `metrics` would report from the written artifacts.
            const std::map<int, metrics::LabeledProjection> one{
                {dim, metrics::LabeledProjection{reduced.values.cast<double>(), model.assignments}}};
            row = metrics::metrics_table(one, opt.silhouette).front();
            per_dim[std::to_string(dim)] = notes;
        } catch (const Error& e) {
            row.error = e.kind() + ": " + e.what();
            log_line(ctx, "sweep: dim " + std::to_string(dim) + " failed: " + *row.error);
        }
        result.rows.push_back(std::move(row));
    }
    fs::create_directories(dir);
    io::write_file_atomic(out, metrics::format_table(result.rows));
    io::write_file_atomic(out_json, metrics::table_to_json(result.rows));
    outputs.insert(outputs.begin(), {out, out_json});
    run.notes()["per_dim"] = per_dim;
    result.stage = run.finish(outputs);
    return result;
}

StageResult run_plot(const StageContext& ctx, const PlotOptions& opt) {
    if (opt.projection.empty() || opt.labels.empty()) throw ConfigError("plot needs --projection and --labels");
    const fs::path out = or_default(opt.output, ctx.out_dir / kScatterFile);
    ordered_json config{{"projection", opt.projection.generic_string()},
                        {"labels", opt.labels.generic_string()},
                        {"highlight", opt.highlight},
                        {"width", opt.width},
                        {"height", opt.height},
                        {"radius", opt.radius}};
    StageRun run(ctx, "plot", out, config, {opt.projection, store::sidecar_path(opt.projection), opt.labels});
    if (run.cached()) return run.cached_result();

    const store::StoreContents s = load_store(opt.projection);
    if (s.matrix.dim() != 2 && s.matrix.rows() > 0) {
        throw DimensionError("plot needs a 2-D projection, " + opt.projection.string() + " has dimension " +
                             std::to_string(s.matrix.dim()));
    }
    ScatterSpec spec;
    spec.points = s.matrix.rows() > 0 ? to_double(s.matrix.values) : MatrixD(0, 2);
    spec.labels = aligned_labels(s.manifest, read_assignments(opt.labels));
    for (const auto& r : s.manifest.records) spec.record_ids.push_back(r.record_id);
    spec.highlight = opt.highlight;
    spec.width = opt.width;
    spec.height = opt.height;
    spec.point_radius = opt.radius;
    ensure_parent(out);
    io::write_file_atomic(out, render_scatter_svg(spec));
    return run.finish({out});
}

StageResult run_report(const StageContext& ctx, const ReportOptions& opt) {
    const fs::path dir = or_default(opt.run_dir, ctx.out_dir);
    const fs::path out = or_default(opt.output, dir / kReportFile);
    const fs::path model_path = dir / kClusterModelFile;
    const fs::path reps_path = dir / kRepresentativesFile;
    const fs::path metrics_path = dir / kMetricsText;
    const fs::path scatter_path = dir / kScatterFile;

    std::vector<std::string> missing;
    for (const auto& [path, stage] : {std::pair{model_path, "cluster"}, std::pair{reps_path, "representatives"},
                                      std::pair{metrics_path, "metrics"}}) {
        if (!fs::exists(path)) missing.push_back(std::string(stage) + " output " + path.generic_string());
    }
    if (!missing.empty()) {
        std::string msg = "run directory is missing:";
        for (const auto& m : missing) msg += " " + m + ";";
        msg.pop_back();
        throw ReportError(msg);
    }

    std::vector<fs::path> inputs{model_path, reps_path, metrics_path};
    if (fs::exists(scatter_path)) inputs.push_back(scatter_path);
    ordered_json config{{"run_dir", dir.generic_string()}, {"m", opt.m}};
    StageRun run(ctx, "report", out, config, inputs);
    if (run.cached()) return run.cached_result();

    const auto model = nlohmann::json::parse(read_text(model_path));
    const auto reps = clustering::representatives_from_json(read_text(reps_path));
    const double total_inertia = model.at("inertia").get<double>();

    std::ostringstream md;
    md << "# Cluster report\n\n";
    md << "Clusters: " << model.at("k").get<int>() << " in " << model.at("d").get<int>()
       << " dimensions, inertia " << total_inertia << ".\n\n";
    md << "## Metrics\n\n```\n" << read_text(metrics_path) << "```\n\n";
    if (fs::exists(scatter_path)) {
        md << "## Scatter\n\n![cluster scatter](" << fs::relative(scatter_path, out.parent_path()).generic_string()
           << ")\n\n";
    }
    std::map<int, std::pair<std::size_t, double>> breakdown;
    if (model.contains("clusters")) {
        for (const auto& c : model.at("clusters")) {
            breakdown[c.at("cluster").get<int>()] = {c.at("size").get<std::size_t>(), c.at("inertia").get<double>()};
        }
    }
    for (std::size_t c = 0; c < reps.per_cluster.size(); ++c) {
        const auto& members = reps.per_cluster[c];
        md << "## Cluster " << c << "\n\n";
        if (auto it = breakdown.find(static_cast<int>(c)); it != breakdown.end()) {
            const double share = total_inertia > 0.0 ? 100.0 * it->second.second / total_inertia : 0.0;
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.1f%%", share);
            md << "- size: " << it->second.first << "\n- inertia share: " << buf << "\n\n";
        }
        // Listing is bounded by m and by the cluster's own size.
        std::size_t limit = std::min(opt.m, members.size());
        if (auto it = breakdown.find(static_cast<int>(c)); it != breakdown.end()) limit = std::min(limit, it->second.first);
        md << "| rank | record | distance | image |\n|---:|---:|---:|---|\n";
        for (std::size_t r = 0; r < limit; ++r) {
            char dist[32];
            std::snprintf(dist, sizeof dist, "%.4f", members[r].distance);
            md << "| " << r + 1 << " | " << members[r].record_id << " | " << dist << " | " << members[r].image_path
               << " |\n";
        }
        md << "\n";
    }
    ensure_parent(out);
    io::write_file_atomic(out, md.str());
    return run.finish({out});
}

std::vector<StageResult> run_all(const StageContext& ctx, const RunAllOptions& opt) {
    std::vector<StageResult> results;
    const int dim = opt.layout.target_dim;
    const fs::path embeddings = ctx.out_dir / kEmbeddingsFile;
    const fs::path reduced = ctx.out_dir / reduced_store_name(dim);
    const fs::path assignments = ctx.out_dir / kAssignmentsFile;

    results.push_back(run_ingest(ctx, opt.ingest));
    results.push_back(run_embed(ctx, opt.embed));
    results.push_back(run_reduce(ctx, ReduceOptions{embeddings, "umap", opt.layout, {}}));
    results.push_back(run_cluster(ctx, ClusterOptions{reduced, opt.kmeans, {}}));
    results.push_back(run_metrics(ctx, MetricsOptions{{reduced}, {assignments}, {}, {}}));
    results.push_back(run_representatives(ctx, RepresentativesOptions{reduced, {}, opt.m, {}}));
    if (opt.plot) {
        if (dim != 2) {
            reduction::LayoutConfig flat = opt.layout;
            flat.target_dim = 2;
            results.push_back(run_reduce(ctx, ReduceOptions{embeddings, "umap", flat, {}}));
        }
        results.push_back(run_plot(ctx, PlotOptions{ctx.out_dir / reduced_store_name(2), assignments, {}, 900, 700, 3.0, {}}));
        results.push_back(run_report(ctx, ReportOptions{ctx.out_dir, opt.m, {}}));
    }
    return results;
}

StageResult run_synth_blobs(const StageContext& ctx, const SynthBlobsOptions& opt) {
    const fs::path out = or_default(opt.output, ctx.out_dir / kEmbeddingsFile);
    const fs::path truth = fs::path(out).replace_extension(".truth.jsonl");
    synthetic::BlobSpec spec = opt.spec;
    spec.seed = ctx.seed;
    ordered_json config{{"points", spec.points},
                        {"dim", spec.dim},
                        {"blobs", spec.blobs},
                        {"sigma", spec.sigma},
                        {"min_center_distance", spec.min_center_distance},
                        {"seed", spec.seed}};
    StageRun run(ctx, "synth-blobs", out, config, {});
    if (run.cached()) return run.cached_result();

    const synthetic::LabeledPoints blobs = synthetic::make_blobs(spec);
    store::EmbeddingMatrix matrix;
    matrix.values = blobs.points.cast<float>();
    store::Manifest manifest;
    manifest.created = store::timestamp_now();
    for (std::size_t i = 0; i < spec.points; ++i) {
        store::PostRecord r;
        r.record_id = static_cast<std::int64_t>(i);
        r.source = "synthetic";
        r.image_path = "blob" + std::to_string(blobs.labels[i]) + "/" + std::to_string(i);
        const auto row = matrix.values.row(static_cast<Eigen::Index>(i));
        r.content_hash = io::sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(row.data()),
                                                  sizeof(float) * static_cast<std::size_t>(row.size())));
        manifest.records.push_back(std::move(r));
    }
    ensure_parent(out);
    store::write_store(matrix, manifest, out);
    write_assignments(truth, manifest, blobs.labels);
    return run.finish({out, store::sidecar_path(out), truth});
}

StageResult run_synth_images(const StageContext& ctx, const SynthImagesOptions& opt) {
    const fs::path dir = or_default(opt.directory, ctx.out_dir / "images");
    const fs::path index = dir / "index.json";
    ordered_json config{{"count", opt.count}, {"groups", opt.groups}, {"size", opt.size}, {"seed", ctx.seed}};
    StageRun run(ctx, "synth-images", index, config, {});
    if (run.cached()) return run.cached_result();

    const auto paths = synthetic::write_image_corpus(dir, opt.count, opt.groups, opt.size, ctx.seed);
    ordered_json listing = ordered_json::array();
    for (std::size_t i = 0; i < paths.size(); ++i) {
        listing.push_back({{"path", paths[i].filename().generic_string()}, {"group", static_cast<int>(i) % opt.groups}});
    }
    io::write_file_atomic(index, listing.dump(2) + "\n");
    std::vector<fs::path> outputs{index};
    outputs.insert(outputs.end(), paths.begin(), paths.end());
    return run.finish(outputs);
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".vitclust.lock") {
    fs::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
        const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
        if (fd >= 0) {
            const std::string pid = std::to_string(::getpid()) + "\n";
            [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
            ::close(fd);
            return;
        }
        if (errno != EEXIST) throw LockError("cannot create " + path_.string() + ": " + std::strerror(errno));
        long holder = 0;
        std::ifstream(path_) >> holder;
        if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM)) {
            throw LockError(dir.string() + " is locked by running process " + std::to_string(holder));
        }
        fs::remove(path_);  // stale
    }
    throw LockError("cannot acquire " + path_.string());
}

OutputLock::~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

}  // namespace vitclust::pipeline
