#include "vitclust/vit.hpp"

#include "vitclust/error.hpp"
#include "vitclust/random.hpp"

#include <cmath>
#include <string>

namespace vitclust::vit {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

void expect_shape(const MatrixF& m, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(name + " has shape " + shape_str(m.rows(), m.cols()) + ", expected " +
                         shape_str(rows, cols));
    }
}

void expect_size(const VectorF& v, Eigen::Index size, const std::string& name) {
    if (v.size() != size) {
        throw ShapeError(name + " has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(size));
    }
}

template <typename M>
void expect_finite(const M& m, const std::string& name) {
    if (!m.allFinite()) throw CorruptFile(name + " contains non-finite values");
}

void check_linear(const Linear& l, Eigen::Index in, Eigen::Index out, const std::string& name) {
    expect_shape(l.weight, in, out, name + ".weight");
    expect_size(l.bias, out, name + ".bias");
    expect_finite(l.weight, name + ".weight");
    expect_finite(l.bias, name + ".bias");
}

void check_norm(const LayerNormParams& p, Eigen::Index dim, const std::string& name) {
    expect_size(p.scale, dim, name + ".scale");
    expect_size(p.shift, dim, name + ".shift");
    expect_finite(p.scale, name + ".scale");
    expect_finite(p.shift, name + ".shift");
}

MatrixF apply_linear(const MatrixF& x, const Linear& l) {
    MatrixF y = x * l.weight;
    y.rowwise() += l.bias.transpose();
    return y;
}

void softmax_rows_inplace(MatrixF& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const float peak = row.maxCoeff();
        double total = 0.0;
        for (Eigen::Index c = 0; c < row.size(); ++c) {
            row(c) = std::exp(row(c) - peak);
            total += row(c);
        }
        const float inv = static_cast<float>(1.0 / total);
        row *= inv;
    }
}

void fill_normal(MatrixF& m, Rng& rng, float stddev) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(standard_normal(rng)) * stddev;
}

void fill_normal(VectorF& v, Rng& rng, float stddev) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<float>(standard_normal(rng)) * stddev;
}

Linear random_linear(int in, int out, Rng& rng) {
    Linear l{MatrixF(in, out), VectorF(out)};
    fill_normal(l.weight, rng, 0.02f);
    fill_normal(l.bias, rng, 0.02f);
    return l;
}

LayerNormParams identity_norm(int dim) {
    return {VectorF::Ones(dim), VectorF::Zero(dim)};
}

}  // namespace

void ModelConfig::validate() const {
    if (image_size < 1 || patch_size < 1 || channels < 1 || hidden_dim < 1 || num_layers < 0 ||
        num_heads < 1 || mlp_dim < 1 || num_classes < 0) {
        throw ShapeError("model dimensions must be positive");
    }
    if (image_size % patch_size != 0) {
        throw ShapeError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                         std::to_string(patch_size));
    }
    if (hidden_dim % num_heads != 0) {
        throw ShapeError("hidden_dim " + std::to_string(hidden_dim) + " not divisible by num_heads " +
                         std::to_string(num_heads));
    }
    if (!(layer_norm_eps > 0.0f)) throw ShapeError("layer_norm_eps must be positive");
}

void ModelWeights::validate() const {
    config.validate();
    const int d = config.hidden_dim;
    expect_shape(patch_projection, config.patch_dim(), d, "patch_embed.weight");
    expect_finite(patch_projection, "patch_embed.weight");
    expect_size(class_token, d, "cls_token");
    expect_finite(class_token.transpose(), "cls_token");
    expect_shape(positional, config.num_patches() + 1, d, "pos_embed");
    expect_finite(positional, "pos_embed");
    if (static_cast<int>(layers.size()) != config.num_layers) {
        throw ShapeError("expected " + std::to_string(config.num_layers) + " layers, have " +
                         std::to_string(layers.size()));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string p = "layer." + std::to_string(i);
        const auto& l = layers[i];
        check_norm(l.norm1, d, p + ".norm1");
        check_linear(l.query, d, d, p + ".attn.q");
        check_linear(l.key, d, d, p + ".attn.k");
        check_linear(l.value, d, d, p + ".attn.v");
        check_linear(l.output, d, d, p + ".attn.o");
        check_norm(l.norm2, d, p + ".norm2");
        check_linear(l.mlp_in, d, config.mlp_dim, p + ".mlp.1");
        check_linear(l.mlp_out, config.mlp_dim, d, p + ".mlp.2");
    }
    check_norm(final_norm, d, "norm");
    if (head) {
        if (head->rows() != d || (config.num_classes > 0 && head->cols() != config.num_classes)) {
            throw ShapeError("head.weight has shape " + shape_str(head->rows(), head->cols()));
        }
        expect_finite(*head, "head.weight");
    }
}

ModelWeights random_weights(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const int d = config.hidden_dim;
    ModelWeights w;
    w.config = config;
    w.patch_projection = MatrixF(config.patch_dim(), d);
    fill_normal(w.patch_projection, rng, 0.02f);
    w.class_token = VectorF(d);
    fill_normal(w.class_token, rng, 0.02f);
    w.positional = MatrixF(config.num_patches() + 1, d);
    fill_normal(w.positional, rng, 0.02f);
    w.layers.reserve(config.num_layers);
    for (int i = 0; i < config.num_layers; ++i) {
        EncoderLayerWeights l;
        l.norm1 = identity_norm(d);
        l.query = random_linear(d, d, rng);
        l.key = random_linear(d, d, rng);
        l.value = random_linear(d, d, rng);
        l.output = random_linear(d, d, rng);
        l.norm2 = identity_norm(d);
        l.mlp_in = random_linear(d, config.mlp_dim, rng);
        l.mlp_out = random_linear(config.mlp_dim, d, rng);
        w.layers.push_back(std::move(l));
    }
    w.final_norm = identity_norm(d);
    if (config.num_classes > 0) {
        MatrixF head(d, config.num_classes);
        fill_normal(head, rng, 0.02f);
        w.head = std::move(head);
    }
    return w;
}

MatrixF patchify(const ImageTensor& image, int patch_size) {
    if (patch_size < 1 || image.height % patch_size != 0 || image.width % patch_size != 0) {
        throw PatchError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                         " is not divisible into " + std::to_string(patch_size) + "px patches");
    }
    const int rows = image.height / patch_size;
    const int cols = image.width / patch_size;
    MatrixF patches(rows * cols, patch_size * patch_size * image.channels);
    for (int pr = 0; pr < rows; ++pr) {
        for (int pc = 0; pc < cols; ++pc) {
            auto out = patches.row(pr * cols + pc);
            Eigen::Index k = 0;
            for (int c = 0; c < image.channels; ++c) {
                for (int y = 0; y < patch_size; ++y) {
                    for (int x = 0; x < patch_size; ++x) {
                        out(k++) = image.at(c, pr * patch_size + y, pc * patch_size + x);
                    }
                }
            }
        }
    }
    return patches;
}

TokenSequence embed_tokens(const MatrixF& patches, const ModelWeights& weights) {
    const Eigen::Index d = weights.patch_projection.cols();
    if (patches.cols() != weights.patch_projection.rows()) {
        throw ShapeError("patch width " + std::to_string(patches.cols()) + " does not match projection rows " +
                         std::to_string(weights.patch_projection.rows()));
    }
    if (weights.positional.rows() != patches.rows() + 1 || weights.positional.cols() != d) {
        throw ShapeError("positional table " + shape_str(weights.positional.rows(), weights.positional.cols()) +
                         " does not fit " + std::to_string(patches.rows()) + " patches");
    }
    if (weights.class_token.size() != d) throw ShapeError("class token width mismatch");

    TokenSequence z;
    z.tokens.resize(patches.rows() + 1, d);
    z.tokens.row(0) = weights.class_token.transpose();
    z.tokens.bottomRows(patches.rows()).noalias() = patches * weights.patch_projection;
    z.tokens += weights.positional;
    return z;
}

MatrixF attention_weights(const MatrixF& q, const MatrixF& k) {
    if (q.rows() != k.rows() || q.cols() != k.cols() || q.cols() == 0) {
        throw ShapeError("attention Q " + shape_str(q.rows(), q.cols()) + " vs K " + shape_str(k.rows(), k.cols()));
    }
    const float scale = 1.0f / std::sqrt(static_cast<float>(q.cols()));
    MatrixF scores = (q * k.transpose()) * scale;
    softmax_rows_inplace(scores);
    return scores;
}

MatrixF attention(const MatrixF& q, const MatrixF& k, const MatrixF& v) {
    if (v.rows() != k.rows() || v.cols() != q.cols()) {
        throw ShapeError("attention V " + shape_str(v.rows(), v.cols()) + " vs Q " + shape_str(q.rows(), q.cols()));
    }
    return attention_weights(q, k) * v;
}

MatrixF layer_norm(const MatrixF& x, const LayerNormParams& params, float eps) {
    if (params.scale.size() != x.cols() || params.shift.size() != x.cols()) {
        throw ShapeError("layer norm width mismatch");
    }
    MatrixF y(x.rows(), x.cols());
    const double inv_n = 1.0 / static_cast<double>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) sum += x(r, c);
        const double mean = sum * inv_n;
        double sq = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double dev = x(r, c) - mean;
            sq += dev * dev;
        }
        const float inv_std = static_cast<float>(1.0 / std::sqrt(sq * inv_n + eps));
        const float m = static_cast<float>(mean);
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            y(r, c) = (x(r, c) - m) * inv_std * params.scale[c] + params.shift[c];
        }
    }
    return y;
}

void gelu_inplace(MatrixF& x) {
    constexpr float inv_sqrt2 = 0.70710678118654752f;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const float v = x.data()[i];
        x.data()[i] = 0.5f * v * (1.0f + std::erf(v * inv_sqrt2));
    }
}

MatrixF multi_head_attention(const MatrixF& x, const EncoderLayerWeights& layer, int num_heads) {
    const Eigen::Index d = x.cols();
    if (num_heads < 1 || d % num_heads != 0) throw ShapeError("hidden width not divisible by head count");
    const Eigen::Index head_dim = d / num_heads;

    const MatrixF q = apply_linear(x, layer.query);
    const MatrixF k = apply_linear(x, layer.key);
    const MatrixF v = apply_linear(x, layer.value);

    MatrixF concat(x.rows(), d);
    for (int h = 0; h < num_heads; ++h) {
        const Eigen::Index off = h * head_dim;
        concat.middleCols(off, head_dim) =
            attention(q.middleCols(off, head_dim), k.middleCols(off, head_dim), v.middleCols(off, head_dim));
    }
    return apply_linear(concat, layer.output);
}

TokenSequence encoder_layer(const TokenSequence& z, const EncoderLayerWeights& layer, const ModelConfig& config) {
    if (z.tokens.cols() != config.hidden_dim) {
        throw ShapeError("token width " + std::to_string(z.tokens.cols()) + " != hidden_dim " +
                         std::to_string(config.hidden_dim));
    }
    TokenSequence out;
    out.tokens = z.tokens +
                 multi_head_attention(layer_norm(z.tokens, layer.norm1, config.layer_norm_eps), layer, config.num_heads);
    MatrixF hidden = apply_linear(layer_norm(out.tokens, layer.norm2, config.layer_norm_eps), layer.mlp_in);
    gelu_inplace(hidden);
    out.tokens += apply_linear(hidden, layer.mlp_out);
    return out;
}

Embedding forward(const ImageTensor& image, const ModelWeights& weights) {
    const ModelConfig& cfg = weights.config;
    if (image.height != cfg.image_size || image.width != cfg.image_size || image.channels != cfg.channels) {
        throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                         std::to_string(image.channels) + " does not match model input " +
                         std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size) + "x" +
                         std::to_string(cfg.channels));
    }
    TokenSequence z = embed_tokens(patchify(image, cfg.patch_size), weights);
    for (const auto& layer : weights.layers) z = encoder_layer(z, layer, cfg);
    const MatrixF cls = layer_norm(z.tokens.topRows(1), weights.final_norm, cfg.layer_norm_eps);
    return Embedding{cls.row(0).transpose(), false};
}

VectorF classify(const Embedding& embedding, const ModelWeights& weights) {
    if (!weights.head) throw NoHeadError("model has no classification head");
    const MatrixF& w = *weights.head;
    if (embedding.values.size() != w.rows()) throw ShapeError("embedding width does not match head rows");
    MatrixF logits = embedding.values.transpose() * w;
    softmax_rows_inplace(logits);
    return logits.row(0).transpose();
}

Embedding normalize(const Embedding& e) {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < e.values.size(); ++i) sq += static_cast<double>(e.values[i]) * e.values[i];
    if (sq == 0.0) return Embedding{e.values, false};
    const double inv = 1.0 / std::sqrt(sq);
    Embedding out{VectorF(e.values.size()), true};
    for (Eigen::Index i = 0; i < e.values.size(); ++i) out.values[i] = static_cast<float>(e.values[i] * inv);
    return out;
}

}  // namespace vitclust::vit
