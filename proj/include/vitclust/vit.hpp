#pragma once

#include "vitclust/image.hpp"
#include "vitclust/matrix.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace vitclust::vit {

/// Architecture hyperparameters. Defaults are ViT-Base/16 at 224px.
struct ModelConfig {
    int image_size = 224;
    int patch_size = 16;
    int channels = 3;
    int hidden_dim = 768;
    int num_layers = 12;
    int num_heads = 12;
    int mlp_dim = 3072;
    int num_classes = 0;  // 0: no classification head
    float layer_norm_eps = 1e-6f;

    int grid() const { return image_size / patch_size; }
    int num_patches() const { return grid() * grid(); }
    int patch_dim() const { return patch_size * patch_size * channels; }
    int head_dim() const { return hidden_dim / num_heads; }

    /// Throws ShapeError when a divisibility or positivity invariant fails.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

struct LayerNormParams {
    VectorF scale;
    VectorF shift;
};

/// y = x * weight + bias, weight stored (in x out).
struct Linear {
    MatrixF weight;
    VectorF bias;
};

struct EncoderLayerWeights {
    LayerNormParams norm1;
    Linear query;
    Linear key;
    Linear value;
    Linear output;
    LayerNormParams norm2;
    Linear mlp_in;
    Linear mlp_out;
};

struct ModelWeights {
    ModelConfig config;
    MatrixF patch_projection;  // (P*P*C) x D
    VectorF class_token;       // D
    MatrixF positional;        // (N+1) x D
    std::vector<EncoderLayerWeights> layers;
    LayerNormParams final_norm;
    std::optional<MatrixF> head;  // D x K

    /// Throws ShapeError if any tensor disagrees with `config`, and
    /// CorruptFile if any entry is non-finite.
    void validate() const;
};

struct TokenSequence {
    MatrixF tokens;  // (N+1) x D, row 0 is the class token
};

struct Embedding {
    VectorF values;
    bool normalized = false;
};

/// Seeded random initialization (truncation-free normal, std 0.02; norms at
/// identity). Intended for tests and smoke runs, not for meaningful features.
ModelWeights random_weights(const ModelConfig& config, std::uint64_t seed);

/// Splits the image into non-overlapping PxP patches in row-major grid
/// order. Each row is a flattened patch laid out channel-major (c, y, x),
/// matching a Conv2d kernel reshaped to (D, C*P*P).
MatrixF patchify(const ImageTensor& image, int patch_size);

/// [class; patches * E] + E_pos.
TokenSequence embed_tokens(const MatrixF& patches, const ModelWeights& weights);

/// Row-wise softmax(Q K^T / sqrt(d_h)). Every row is a probability vector.
MatrixF attention_weights(const MatrixF& q, const MatrixF& k);

/// softmax(Q K^T / sqrt(d_h)) V, with d_h = Q.cols(). For the single-head
/// case this is the textbook sqrt(D) scaling; with h heads each head uses
/// its own width.
MatrixF attention(const MatrixF& q, const MatrixF& k, const MatrixF& v);

MatrixF layer_norm(const MatrixF& x, const LayerNormParams& params, float eps);

/// Exact (erf) GELU, applied elementwise in place.
void gelu_inplace(MatrixF& x);

/// h heads over LN-normalized tokens, concatenated then output-projected.
MatrixF multi_head_attention(const MatrixF& x, const EncoderLayerWeights& layer, int num_heads);

/// Pre-norm block: z' = z + MHSA(LN1(z)); out = z' + MLP(LN2(z')).
TokenSequence encoder_layer(const TokenSequence& z, const EncoderLayerWeights& layer,
                            const ModelConfig& config);

/// Full pass; returns the final-normed class token as a D-vector.
Embedding forward(const ImageTensor& image, const ModelWeights& weights);

/// softmax(z W) over the head's K classes. Throws NoHeadError without a head.
VectorF classify(const Embedding& embedding, const ModelWeights& weights);

/// L2 unit norm. A zero vector is returned unchanged with normalized=false.
Embedding normalize(const Embedding& e);

}  // namespace vitclust::vit
