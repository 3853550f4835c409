#include "../oracles/vit_reference.hpp"
#include "../support.hpp"

#include "vitclust/error.hpp"
#include "vitclust/vit.hpp"

#include <doctest.h>

#include <cstring>

using namespace vitclust;
using namespace vitclust::vit;

namespace {

ModelConfig toy_config() {
    ModelConfig c;
    c.image_size = 32;
    c.patch_size = 16;
    c.hidden_dim = 8;
    c.num_layers = 1;
    c.num_heads = 2;
    c.mlp_dim = 16;
    return c;
}

ImageTensor random_image(int size, Rng& rng) {
    ImageTensor img{size, size, 3, std::vector<float>(3 * size * size)};
    for (auto& v : img.values) v = static_cast<float>(2.0 * uniform01(rng) - 1.0);
    return img;
}

MatrixF random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
    return testing::gaussian_matrix(r, c, rng, scale).cast<float>();
}

/// Spreads weights out so the oracle comparison is not dominated by the
/// residual stream.
void scramble(ModelWeights& w, Rng& rng) {
    auto fill = [&](auto& m, double scale, double offset) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(offset + scale * standard_normal(rng));
    };
    fill(w.patch_projection, 0.2, 0.0);
    fill(w.class_token, 1.0, 0.0);
    fill(w.positional, 0.5, 0.0);
    for (auto& l : w.layers) {
        for (auto* lin : {&l.query, &l.key, &l.value, &l.output, &l.mlp_in, &l.mlp_out}) {
            fill(lin->weight, 0.5, 0.0);
            fill(lin->bias, 0.1, 0.0);
        }
        for (auto* ln : {&l.norm1, &l.norm2, &w.final_norm}) {
            fill(ln->scale, 0.2, 1.0);
            fill(ln->shift, 0.1, 0.0);
        }
    }
}

}  // namespace

TEST_CASE("patchify shapes") {
    Rng rng(1);
    CHECK(patchify(random_image(224, rng), 16).rows() == 196);
    CHECK(patchify(random_image(224, rng), 16).cols() == 768);
    const MatrixF small = patchify(random_image(32, rng), 16);
    CHECK(small.rows() == 4);
    CHECK(small.cols() == 768);
    CHECK_THROWS_AS(patchify(random_image(100, rng), 16), PatchError);
}

TEST_CASE("patchify flattens channel-major within a patch") {
    Rng rng(2);
    const ImageTensor img = random_image(32, rng);
    const MatrixF p = patchify(img, 16);
    // Patch 1 is the top-right block; element (c, y, x) sits at c*256 + y*16 + x.
    CHECK(p(1, 2 * 256 + 3 * 16 + 5) == img.at(2, 3, 16 + 5));
    CHECK(p(2, 0) == img.at(0, 16, 0));
}

TEST_CASE("embed_tokens linearity") {
    const ModelConfig c = toy_config();
    ModelWeights w = random_weights(c, 3);
    const MatrixF zero_patches = MatrixF::Zero(4, c.patch_dim());
    w.positional.setZero();
    w.class_token.setZero();
    CHECK(embed_tokens(zero_patches, w).tokens.isZero(0));

    Rng rng(3);
    w.positional = random_matrix(5, 8, rng);
    const TokenSequence t = embed_tokens(zero_patches, w);
    CHECK(t.tokens.rows() == 5);
    CHECK(t.tokens.cols() == 8);
    CHECK(t.tokens == w.positional);
}

TEST_CASE("attention single token returns its value") {
    MatrixF v(1, 3);
    v << 0.5f, -2.0f, 7.0f;
    CHECK(attention(v, v, v) == v);
}

TEST_CASE("zero queries average the values") {
    Rng rng(4);
    const MatrixF q = MatrixF::Zero(6, 4);
    const MatrixF k = random_matrix(6, 4, rng);
    const MatrixF v = random_matrix(6, 4, rng);
    const MatrixF out = attention(q, k, v);
    const Eigen::RowVectorXf mean = v.colwise().mean();
    for (Eigen::Index r = 0; r < 6; ++r) CHECK((out.row(r) - mean).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("attention matches the formula for n=2") {
    Rng rng(5);
    const MatrixF q = random_matrix(2, 3, rng), k = random_matrix(2, 3, rng), v = random_matrix(2, 3, rng);
    const MatrixF out = attention(q, k, v);
    for (int i = 0; i < 2; ++i) {
        double s[2];
        for (int j = 0; j < 2; ++j) s[j] = q.row(i).cast<double>().dot(k.row(j).cast<double>()) / std::sqrt(3.0);
        const double w0 = std::exp(s[0]) / (std::exp(s[0]) + std::exp(s[1]));
        for (int c = 0; c < 3; ++c) CHECK(out(i, c) == doctest::Approx(w0 * v(0, c) + (1 - w0) * v(1, c)).epsilon(1e-6));
    }
}

TEST_CASE("attention weights are row-stochastic even for huge scores") {
    Rng rng(6);
    for (int t = 0; t < 50; ++t) {
        const MatrixF q = random_matrix(9, 4, rng, 50.0), k = random_matrix(9, 4, rng, 50.0);
        const MatrixF a = attention_weights(q, k);
        CHECK(a.allFinite());
        CHECK(a.minCoeff() >= 0.0f);
        for (Eigen::Index r = 0; r < a.rows(); ++r) CHECK(std::abs(a.row(r).sum() - 1.0f) <= 1e-6);
    }
}

TEST_CASE("encoder layer with zero weights is the identity") {
    const ModelConfig c = toy_config();
    ModelWeights w = random_weights(c, 7);
    EncoderLayerWeights& l = w.layers[0];
    for (auto* lin : {&l.query, &l.key, &l.value, &l.output, &l.mlp_in, &l.mlp_out}) {
        lin->weight.setZero();
        lin->bias.setZero();
    }
    l.norm1.scale.setZero();
    l.norm1.shift.setZero();
    l.norm2.scale.setZero();
    l.norm2.shift.setZero();
    Rng rng(7);
    const TokenSequence in{random_matrix(5, 8, rng)};
    const TokenSequence out = encoder_layer(in, l, c);
    CHECK(out.tokens.rows() == in.tokens.rows());
    CHECK(out.tokens.cols() == in.tokens.cols());
    CHECK(out.tokens == in.tokens);
}

TEST_CASE("forward matches the scalar-loop reference on the toy config") {
    Rng rng(8);
    for (int draw = 0; draw < 10; ++draw) {
        ModelWeights w = random_weights(toy_config(), rng());
        scramble(w, rng);
        const ImageTensor img = random_image(32, rng);
        const VectorF got = forward(img, w).values;
        const auto want = oracle::reference_forward(img, w);
        REQUIRE(got.size() == 8);
        for (int i = 0; i < 8; ++i) CHECK(got(i) == doctest::Approx(want[i]).epsilon(1e-5).scale(1.0));
    }
}

TEST_CASE("forward is deterministic and has fixed width") {
    ModelConfig c = toy_config();
    c.hidden_dim = 12;
    c.num_heads = 3;
    const ModelWeights w = random_weights(c, 9);
    Rng rng(9);
    const ImageTensor img = random_image(32, rng);
    const Embedding a = forward(img, w), b = forward(img, w);
    CHECK(a.values.size() == 12);
    CHECK(a.values.allFinite());
    CHECK(std::memcmp(a.values.data(), b.values.data(), sizeof(float) * 12) == 0);

    ModelConfig wide = c;
    wide.image_size = 64;
    CHECK(forward(random_image(64, rng), random_weights(wide, 9)).values.size() == 12);
}

TEST_CASE("swapping two patches with their positional rows keeps the class token") {
    ModelWeights w = random_weights(toy_config(), 10);
    Rng rng(10);
    scramble(w, rng);
    const ImageTensor img = random_image(32, rng);
    // Swap the top-left and bottom-right 16x16 blocks.
    ImageTensor swapped = img;
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) std::swap(swapped.at(ch, y, x), swapped.at(ch, 16 + y, 16 + x));
    ModelWeights w2 = w;
    w2.positional.row(1).swap(w2.positional.row(4));
    const VectorF a = forward(img, w).values, b = forward(swapped, w2).values;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("input shape mismatch is a ShapeError") {
    const ModelWeights w = random_weights(toy_config(), 11);
    Rng rng(11);
    CHECK_THROWS_AS(forward(random_image(64, rng), w), ShapeError);
}

TEST_CASE("classify") {
    ModelConfig c = toy_config();
    c.num_classes = 4;
    ModelWeights w = random_weights(c, 12);
    REQUIRE(w.head.has_value());
    w.head->setZero();
    Embedding e{VectorF::Ones(8), false};
    const VectorF uniform = classify(e, w);
    for (int i = 0; i < 4; ++i) CHECK(uniform(i) == doctest::Approx(0.25));

    Rng rng(12);
    *w.head = random_matrix(8, 4, rng);
    e.values = random_matrix(8, 1, rng);
    const VectorF p = classify(e, w);
    const Eigen::VectorXd logits = (e.values.transpose() * *w.head).transpose().cast<double>();
    const double z = logits.array().exp().sum();
    for (int i = 0; i < 4; ++i) CHECK(p(i) == doctest::Approx(std::exp(logits(i)) / z).epsilon(1e-6));

    c.num_classes = 2;
    ModelWeights two = random_weights(c, 13);
    two.head->setZero();
    (*two.head)(0, 1) = 1000.0f;
    const VectorF sat = classify(Embedding{VectorF::Unit(8, 0), false}, two);
    CHECK(sat(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sat(1) == doctest::Approx(1.0));

    CHECK_THROWS_AS(classify(e, random_weights(toy_config(), 1)), NoHeadError);
}

TEST_CASE("normalize") {
    Embedding e{VectorF(2), false};
    e.values << 3, 4;
    const Embedding n = normalize(e);
    CHECK(n.normalized);
    CHECK(n.values(0) == doctest::Approx(0.6));
    CHECK(n.values(1) == doctest::Approx(0.8));
    CHECK(normalize(n).values.isApprox(n.values, 1e-7f));

    Embedding scaled = e;
    scaled.values *= 17.5f;
    CHECK(normalize(scaled).values.isApprox(n.values, 1e-6f));

    const Embedding zero = normalize(Embedding{VectorF::Zero(5), false});
    CHECK_FALSE(zero.normalized);
    CHECK(zero.values.isZero(0));
}

TEST_CASE("config validation") {
    ModelConfig c = toy_config();
    c.num_heads = 3;
    CHECK_THROWS(c.validate());
    c = toy_config();
    c.image_size = 30;
    CHECK_THROWS(c.validate());
}
