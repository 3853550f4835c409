#include "vitclust/weights_io.hpp"

#include "vitclust/error.hpp"
#include "vitclust/io.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <map>

namespace vitclust::vit {

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
    return json{{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"channels", c.channels},
                {"hidden_dim", c.hidden_dim}, {"num_layers", c.num_layers}, {"num_heads", c.num_heads},
                {"mlp_dim", c.mlp_dim},       {"num_classes", c.num_classes}, {"layer_norm_eps", c.layer_norm_eps}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.channels = j.value("channels", 3);
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.num_layers = j.at("num_layers").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.mlp_dim = j.at("mlp_dim").get<int>();
    c.num_classes = j.value("num_classes", 0);
    c.layer_norm_eps = j.value("layer_norm_eps", 1e-6f);
    return c;
}

struct TensorRef {
    std::vector<std::int64_t> shape;
    const float* data = nullptr;  // unaligned view into the file buffer
    std::size_t count = 0;
};

class TensorTable {
public:
    void add_matrix(const std::string& name, const MatrixF& m) {
        entries_.push_back({name, {m.rows(), m.cols()}, std::vector<float>(m.data(), m.data() + m.size())});
    }
    void add_vector(const std::string& name, const VectorF& v) {
        entries_.push_back({name, {v.size()}, std::vector<float>(v.data(), v.data() + v.size())});
    }
    void add_linear(const std::string& w, const std::string& b, const Linear& l) {
        add_matrix(w, l.weight);
        add_vector(b, l.bias);
    }
    void add_norm(const std::string& prefix, const LayerNormParams& p) {
        add_vector(prefix + ".scale", p.scale);
        add_vector(prefix + ".shift", p.shift);
    }

    std::vector<std::uint8_t> serialize(const ModelConfig& config) const {
        json header;
        header["__metadata__"] = {{"format", "vitclust-weights"}, {"config", config_to_json(config)}};
        std::uint64_t offset = 0;
        for (const auto& e : entries_) {
            header[e.name] = {{"dtype", "float32"}, {"shape", e.shape}, {"offset", offset}};
            offset += e.values.size() * sizeof(float);
        }
        const std::string text = header.dump();
        io::ByteWriter w;
        w.bytes(kWeightMagic, 8);
        w.u64(text.size());
        w.bytes(text.data(), text.size());
        for (const auto& e : entries_) {
            for (float v : e.values) w.f32(v);
        }
        return std::move(w.buffer());
    }

private:
    struct Entry {
        std::string name;
        std::vector<std::int64_t> shape;
        std::vector<float> values;
    };
    std::vector<Entry> entries_;
};

class WeightReader {
public:
    explicit WeightReader(const std::filesystem::path& path) : path_(path), bytes_(io::read_file(path)) {
        if (bytes_.size() < 16 || std::memcmp(bytes_.data(), kWeightMagic, 8) != 0) {
            throw CorruptFile(path.string() + ": missing VITW0001 magic");
        }
        io::ByteReader r(bytes_);
        std::uint8_t skip[8];
        r.take(skip, 8);
        const std::uint64_t header_len = r.u64();
        if (header_len > r.remaining()) throw CorruptFile(path.string() + ": header length exceeds file size");
        const char* text = reinterpret_cast<const char*>(bytes_.data() + r.position());
        try {
            header_ = json::parse(text, text + header_len);
        } catch (const json::exception& e) {
            throw CorruptFile(path.string() + ": malformed JSON header: " + e.what());
        }
        if (!header_.is_object()) throw CorruptFile(path.string() + ": header is not an object");
        payload_ = r.position() + header_len;
    }

    ModelConfig recorded_config() const {
        try {
            return config_from_json(header_.at("__metadata__").at("config"));
        } catch (const json::exception& e) {
            throw CorruptFile(path_.string() + ": header lacks a model config: " + e.what());
        }
    }

    bool has(const std::string& name) const { return header_.contains(name); }

    TensorRef tensor(const std::string& name) const {
        if (!header_.contains(name)) throw MissingTensor("tensor '" + name + "' missing from " + path_.string());
        TensorRef t;
        std::uint64_t offset = 0;
        try {
            const json& e = header_.at(name);
            if (e.value("dtype", std::string("float32")) != "float32") {
                throw CorruptFile("tensor '" + name + "' has unsupported dtype");
            }
            t.shape = e.at("shape").get<std::vector<std::int64_t>>();
            offset = e.at("offset").get<std::uint64_t>();
        } catch (const json::exception& ex) {
            throw CorruptFile("tensor '" + name + "' has a malformed entry: " + ex.what());
        }
        t.count = 1;
        for (auto s : t.shape) {
            if (s < 0) throw CorruptFile("tensor '" + name + "' has a negative dimension");
            t.count *= static_cast<std::size_t>(s);
        }
        const std::size_t avail = bytes_.size() - payload_;
        if (offset > avail || t.count * sizeof(float) > avail - offset) {
            throw CorruptFile("tensor '" + name + "' extends past the end of " + path_.string());
        }
        t.data = reinterpret_cast<const float*>(bytes_.data() + payload_ + offset);
        return t;
    }

    MatrixF matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
        const TensorRef t = tensor(name);
        if (t.shape.size() != 2 || t.shape[0] != rows || t.shape[1] != cols) {
            throw ShapeError("tensor '" + name + "' has shape " + shape_text(t.shape) + ", expected [" +
                             std::to_string(rows) + ", " + std::to_string(cols) + "]");
        }
        MatrixF m(rows, cols);
        std::memcpy(m.data(), t.data, t.count * sizeof(float));
        return m;
    }

    VectorF vector(const std::string& name, Eigen::Index size) const {
        const TensorRef t = tensor(name);
        if (t.shape.size() != 1 || t.shape[0] != size) {
            throw ShapeError("tensor '" + name + "' has shape " + shape_text(t.shape) + ", expected [" +
                             std::to_string(size) + "]");
        }
        VectorF v(size);
        std::memcpy(v.data(), t.data, t.count * sizeof(float));
        return v;
    }

    Linear linear(const std::string& w, const std::string& b, Eigen::Index in, Eigen::Index out) const {
        return Linear{matrix(w, in, out), vector(b, out)};
    }

    LayerNormParams norm(const std::string& prefix, Eigen::Index dim) const {
        return LayerNormParams{vector(prefix + ".scale", dim), vector(prefix + ".shift", dim)};
    }

private:
    static std::string shape_text(const std::vector<std::int64_t>& shape) {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
        return s + "]";
    }

    std::filesystem::path path_;
    std::vector<std::uint8_t> bytes_;
    json header_;
    std::size_t payload_ = 0;
};

std::string layer_prefix(int i) { return "layer." + std::to_string(i); }

static_assert(sizeof(float) == 4);

}  // namespace

std::vector<std::string> required_tensor_names(const ModelConfig& config) {
    std::vector<std::string> names = {"patch_embed.weight", "cls_token", "pos_embed"};
    for (int i = 0; i < config.num_layers; ++i) {
        const std::string p = layer_prefix(i);
        for (const char* s : {".norm1.scale", ".norm1.shift", ".attn.wq", ".attn.bq", ".attn.wk", ".attn.bk",
                              ".attn.wv", ".attn.bv", ".attn.wo", ".attn.bo", ".norm2.scale", ".norm2.shift",
                              ".mlp.w1", ".mlp.b1", ".mlp.w2", ".mlp.b2"}) {
            names.push_back(p + s);
        }
    }
    names.push_back("norm.scale");
    names.push_back("norm.shift");
    return names;
}

void save_weights(const ModelWeights& weights, const std::filesystem::path& path) {
    weights.validate();
    TensorTable table;
    table.add_matrix("patch_embed.weight", weights.patch_projection);
    table.add_vector("cls_token", weights.class_token);
    table.add_matrix("pos_embed", weights.positional);
    for (std::size_t i = 0; i < weights.layers.size(); ++i) {
        const auto& l = weights.layers[i];
        const std::string p = layer_prefix(static_cast<int>(i));
        table.add_norm(p + ".norm1", l.norm1);
        table.add_linear(p + ".attn.wq", p + ".attn.bq", l.query);
        table.add_linear(p + ".attn.wk", p + ".attn.bk", l.key);
        table.add_linear(p + ".attn.wv", p + ".attn.bv", l.value);
        table.add_linear(p + ".attn.wo", p + ".attn.bo", l.output);
        table.add_norm(p + ".norm2", l.norm2);
        table.add_linear(p + ".mlp.w1", p + ".mlp.b1", l.mlp_in);
        table.add_linear(p + ".mlp.w2", p + ".mlp.b2", l.mlp_out);
    }
    table.add_norm("norm", weights.final_norm);
    ModelConfig recorded = weights.config;
    if (weights.head) {
        table.add_matrix("head.weight", *weights.head);
        recorded.num_classes = static_cast<int>(weights.head->cols());
    }
    io::write_file_atomic(path, table.serialize(recorded));
}

ModelWeights load_weights(const std::filesystem::path& path, const ModelConfig& config) {
    config.validate();
    const WeightReader r(path);
    const Eigen::Index d = config.hidden_dim;

    ModelWeights w;
    w.config = config;
    w.patch_projection = r.matrix("patch_embed.weight", config.patch_dim(), d);
    w.class_token = r.vector("cls_token", d);
    w.positional = r.matrix("pos_embed", config.num_patches() + 1, d);
    w.layers.reserve(config.num_layers);
    for (int i = 0; i < config.num_layers; ++i) {
        const std::string p = layer_prefix(i);
        EncoderLayerWeights l;
        l.norm1 = r.norm(p + ".norm1", d);
        l.query = r.linear(p + ".attn.wq", p + ".attn.bq", d, d);
        l.key = r.linear(p + ".attn.wk", p + ".attn.bk", d, d);
        l.value = r.linear(p + ".attn.wv", p + ".attn.bv", d, d);
        l.output = r.linear(p + ".attn.wo", p + ".attn.bo", d, d);
        l.norm2 = r.norm(p + ".norm2", d);
        l.mlp_in = r.linear(p + ".mlp.w1", p + ".mlp.b1", d, config.mlp_dim);
        l.mlp_out = r.linear(p + ".mlp.w2", p + ".mlp.b2", config.mlp_dim, d);
        w.layers.push_back(std::move(l));
    }
    w.final_norm = r.norm("norm", d);
    if (config.num_classes > 0 || r.has("head.weight")) {
        const TensorRef head = r.tensor("head.weight");
        const Eigen::Index k = config.num_classes > 0 ? config.num_classes
                                                      : (head.shape.size() == 2 ? head.shape[1] : -1);
        w.head = r.matrix("head.weight", d, k);
        w.config.num_classes = static_cast<int>(k);
    }
    w.validate();
    return w;
}

ModelWeights load_weights(const std::filesystem::path& path) {
    return load_weights(path, read_weight_config(path));
}

ModelConfig read_weight_config(const std::filesystem::path& path) {
    return WeightReader(path).recorded_config();
}

}  // namespace vitclust::vit
