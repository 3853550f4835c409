#include "vitclust/clustering.hpp"
#include "vitclust/embedding_store.hpp"
#include "vitclust/error.hpp"
#include "vitclust/image.hpp"
#include "vitclust/io.hpp"
#include "vitclust/parallel.hpp"
#include "vitclust/pipeline.hpp"
#include "vitclust/quality_metrics.hpp"
#include "vitclust/reduction.hpp"
#include "vitclust/synthetic.hpp"
#include "vitclust/vit.hpp"
#include "vitclust/weights_io.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace vitclust;

namespace {

using Array3 = py::array_t<float, py::array::c_style | py::array::forcecast>;

ImageTensor to_tensor(const Array3& a) {
    if (a.ndim() != 3) throw ShapeError("image array must be (channels, height, width)");
    ImageTensor t;
    t.channels = static_cast<int>(a.shape(0));
    t.height = static_cast<int>(a.shape(1));
    t.width = static_cast<int>(a.shape(2));
    t.values.assign(a.data(), a.data() + a.size());
    return t;
}

py::array_t<float> from_tensor(const ImageTensor& t) {
    py::array_t<float> out({t.channels, t.height, t.width});
    std::copy(t.values.begin(), t.values.end(), out.mutable_data());
    return out;
}

py::dict record_dict(const store::PostRecord& r) {
    py::dict d;
    d["record_id"] = r.record_id;
    d["source"] = r.source;
    d["image_path"] = r.image_path;
    d["content_hash"] = r.content_hash;
    return d;
}

store::PostRecord record_from(const py::handle& h) {
    const auto d = h.cast<py::dict>();
    return {d["record_id"].cast<std::int64_t>(), d["source"].cast<std::string>(), d["image_path"].cast<std::string>(),
            d["content_hash"].cast<std::string>()};
}

py::list manifest_list(const store::Manifest& m) {
    py::list out;
    for (const auto& r : m.records) out.append(record_dict(r));
    return out;
}

store::Manifest manifest_from(const py::list& records) {
    store::Manifest m;
    for (const auto& r : records) m.records.push_back(record_from(r));
    return m;
}

py::dict model_dict(const clustering::ClusterModel& m) {
    py::dict d;
    d["centroids"] = m.centroids;
    d["labels"] = m.assignments;
    d["inertia"] = m.inertia;
    d["iterations"] = m.iterations;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "ViT embeddings, UMAP, k-means and cluster metrics";

    static py::exception<Error> base_error(m, "VitclustError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object err = base_error;
            py::object instance = err(std::string(e.kind()) + ": " + e.what());
            instance.attr("kind") = e.kind();
            PyErr_SetObject(err.ptr(), instance.ptr());
        }
    });

    m.def("set_num_threads", &set_num_threads, py::arg("n"));
    m.def("version", &pipeline::version_string);

    // Images and the encoder.
    py::class_<vit::ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("image_size", &vit::ModelConfig::image_size)
        .def_readwrite("patch_size", &vit::ModelConfig::patch_size)
        .def_readwrite("channels", &vit::ModelConfig::channels)
        .def_readwrite("hidden_dim", &vit::ModelConfig::hidden_dim)
        .def_readwrite("num_layers", &vit::ModelConfig::num_layers)
        .def_readwrite("num_heads", &vit::ModelConfig::num_heads)
        .def_readwrite("mlp_dim", &vit::ModelConfig::mlp_dim)
        .def_readwrite("num_classes", &vit::ModelConfig::num_classes)
        .def_readwrite("layer_norm_eps", &vit::ModelConfig::layer_norm_eps)
        .def("validate", &vit::ModelConfig::validate)
        .def("__repr__", [](const vit::ModelConfig& c) {
            return "ModelConfig(image_size=" + std::to_string(c.image_size) + ", patch_size=" +
                   std::to_string(c.patch_size) + ", hidden_dim=" + std::to_string(c.hidden_dim) + ", num_layers=" +
                   std::to_string(c.num_layers) + ", num_heads=" + std::to_string(c.num_heads) + ")";
        });
    m.def("model_preset", &pipeline::model_preset, py::arg("name"));

    py::class_<vit::ModelWeights>(m, "ModelWeights")
        .def_readonly("config", &vit::ModelWeights::config)
        .def("save", [](const vit::ModelWeights& w, const std::filesystem::path& p) { vit::save_weights(w, p); });
    m.def("random_weights", &vit::random_weights, py::arg("config"), py::arg("seed") = 42);
    m.def("load_weights", py::overload_cast<const std::filesystem::path&>(&vit::load_weights), py::arg("path"));

    m.def(
        "preprocess",
        [](py::bytes raw, int image_size) {
            const std::string s = raw;
            return from_tensor(preprocess(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()),
                                          image_size));
        },
        py::arg("raw_bytes"), py::arg("image_size") = 224, "Decode, resize and standardize an encoded image.");
    m.def(
        "embed",
        [](const vit::ModelWeights& w, const Array3& image, bool normalize) {
            const ImageTensor t = to_tensor(image);
            py::gil_scoped_release release;
            vit::Embedding e = vit::forward(t, w);
            return normalize ? vit::normalize(e).values : e.values;
        },
        py::arg("weights"), py::arg("image"), py::arg("normalize") = true,
        "Class-token embedding of one preprocessed (C, H, W) image.");
    m.def(
        "embed_files",
        [](const vit::ModelWeights& w, const std::vector<std::filesystem::path>& paths, bool normalize) {
            py::gil_scoped_release release;
            MatrixF out(static_cast<Eigen::Index>(paths.size()), w.config.hidden_dim);
            for (std::size_t i = 0; i < paths.size(); ++i) {
                vit::Embedding e = vit::forward(preprocess(io::read_file(paths[i]), w.config.image_size), w);
                out.row(static_cast<Eigen::Index>(i)) = (normalize ? vit::normalize(e) : e).values.transpose();
            }
            return out;
        },
        py::arg("weights"), py::arg("paths"), py::arg("normalize") = true);
    m.def(
        "attention_weights", [](const MatrixF& q, const MatrixF& k) { return vit::attention_weights(q, k); },
        py::arg("q"), py::arg("k"));

    // Embedding store.
    m.def(
        "ingest",
        [](const std::filesystem::path& dir, const std::string& source) { return manifest_list(store::ingest(dir, source)); },
        py::arg("directory"), py::arg("source") = "local");
    m.def(
        "deduplicate", [](const py::list& records) { return manifest_list(store::deduplicate(manifest_from(records))); },
        py::arg("records"));
    m.def(
        "write_store",
        [](const std::filesystem::path& path, const MatrixF& values, const py::list& records, bool normalized) {
            store::EmbeddingMatrix mat{values, normalized};
            store::write_store(mat, manifest_from(records), path);
        },
        py::arg("path"), py::arg("values"), py::arg("records"), py::arg("normalized") = false);
    m.def(
        "read_store",
        [](const std::filesystem::path& path) {
            const auto s = store::read_store(path);
            return py::make_tuple(s.matrix.values, manifest_list(s.manifest), s.matrix.normalized);
        },
        py::arg("path"), "Returns (values, records, normalized).");

    // Reduction.
    m.def("fit_ab", [](double min_dist, double spread) {
        const auto p = reduction::fit_ab(min_dist, spread);
        return py::make_tuple(p.a, p.b);
    }, py::arg("min_dist"), py::arg("spread") = 1.0);
    m.def(
        "umap",
        [](const MatrixD& points, int target_dim, int n_neighbors, double min_dist, int epochs, std::uint64_t seed,
           const std::string& init, bool parallel) {
            reduction::LayoutConfig cfg;
            cfg.target_dim = target_dim;
            cfg.n_neighbors = n_neighbors;
            cfg.min_dist = min_dist;
            cfg.epochs = epochs;
            cfg.seed = seed;
            if (init != "spectral" && init != "random") throw ConfigError("init must be 'spectral' or 'random'");
            cfg.init = init == "random" ? reduction::InitMethod::Random : reduction::InitMethod::Spectral;
            cfg.parallel = parallel;
            cfg.validate(points.cols());
            py::gil_scoped_release release;
            return reduction::umap(points, cfg);
        },
        py::arg("points"), py::arg("target_dim") = 2, py::arg("n_neighbors") = 15, py::arg("min_dist") = 0.1,
        py::arg("epochs") = 200, py::arg("seed") = 42, py::arg("init") = "spectral", py::arg("parallel") = false);
    m.def("pca", &reduction::pca, py::arg("points"), py::arg("d"));

    // Clustering.
    m.def(
        "kmeans",
        [](const MatrixD& points, int k, std::uint64_t seed, int n_init, int max_iter, double tol) {
            clustering::KMeansConfig cfg{k, max_iter, tol, n_init, seed};
            py::gil_scoped_release release;
            const auto model = clustering::fit(points, cfg);
            py::gil_scoped_acquire acquire;
            return model_dict(model);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 42, py::arg("n_init") = 10, py::arg("max_iter") = 300,
        py::arg("tol") = 1e-4, "k-means++ with Lloyd refinement; returns centroids, labels, inertia, iterations.");
    m.def("predict", &clustering::predict, py::arg("centroids"), py::arg("points"));
    m.def(
        "representatives",
        [](const MatrixD& points, const py::list& records, const MatrixD& centroids, std::size_t count) {
            const auto reps = clustering::representatives(points, manifest_from(records), centroids, count);
            py::list out;
            for (const auto& cluster : reps.per_cluster) {
                py::list rows;
                for (const auto& r : cluster) rows.append(py::make_tuple(r.record_id, r.distance, r.image_path));
                out.append(rows);
            }
            return out;
        },
        py::arg("points"), py::arg("records"), py::arg("centroids"), py::arg("m") = 10);

    // Metrics.
    m.def("silhouette", &metrics::silhouette, py::arg("points"), py::arg("labels"));
    m.def("silhouette_samples", &metrics::silhouette_samples, py::arg("points"), py::arg("labels"));
    m.def("calinski_harabasz", &metrics::calinski_harabasz, py::arg("points"), py::arg("labels"));
    m.def("davies_bouldin", &metrics::davies_bouldin, py::arg("points"), py::arg("labels"));
    m.def(
        "format_table",
        [](const std::vector<std::tuple<int, double, double, double>>& rows) {
            std::vector<metrics::MetricsRow> out;
            for (const auto& [dim, s, ch, db] : rows) out.push_back({dim, s, ch, db, "exact", {}});
            return metrics::format_table(out);
        },
        py::arg("rows"), "Render (dim, silhouette, C-H, D-B) rows as the metrics table.");

    // Synthetic fixtures.
    m.def(
        "make_blobs",
        [](std::size_t points, int dim, int blobs, double sigma, double min_distance, std::uint64_t seed) {
            const auto b = synthetic::make_blobs({points, dim, blobs, sigma, min_distance, seed});
            return py::make_tuple(b.points, b.labels);
        },
        py::arg("points") = 60, py::arg("dim") = 50, py::arg("blobs") = 3, py::arg("sigma") = 0.1,
        py::arg("min_distance") = 10.0, py::arg("seed") = 0);
}
