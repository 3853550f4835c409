#include "../support.hpp"

#include "vitclust/error.hpp"
#include "vitclust/io.hpp"
#include "vitclust/weights_io.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstring>

using namespace vitclust;
using namespace vitclust::vit;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.image_size = 32;
    c.patch_size = 16;
    c.hidden_dim = 8;
    c.num_layers = 2;
    c.num_heads = 2;
    c.mlp_dim = 16;
    c.num_classes = 3;
    return c;
}

bool same(const MatrixF& a, const MatrixF& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0;
}
bool same(const VectorF& a, const VectorF& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0;
}

/// Rewrites the file without `name`, keeping every other tensor.
void drop_tensor(const std::filesystem::path& path, const std::string& name) {
    auto bytes = io::read_file(path);
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= std::uint64_t{bytes[8 + i]} << (8 * i);
    auto header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
    header.erase(name);
    const std::string text = header.dump();
    io::ByteWriter w;
    w.bytes(bytes.data(), 8);
    w.u64(text.size());
    w.bytes(text.data(), text.size());
    w.bytes(bytes.data() + 16 + len, bytes.size() - 16 - len);
    io::write_file_atomic(path, w.buffer());
}

}  // namespace

TEST_CASE("weights roundtrip bit for bit") {
    testing::TempDir dir("weights_roundtrip");
    const ModelWeights w = random_weights(small_config(), 5);
    save_weights(w, dir / "m.vitw");
    CHECK(read_weight_config(dir / "m.vitw") == w.config);
    const ModelWeights back = load_weights(dir / "m.vitw", small_config());
    CHECK(same(back.patch_projection, w.patch_projection));
    CHECK(same(back.class_token, w.class_token));
    CHECK(same(back.positional, w.positional));
    REQUIRE(back.layers.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(same(back.layers[i].query.weight, w.layers[i].query.weight));
        CHECK(same(back.layers[i].mlp_out.bias, w.layers[i].mlp_out.bias));
        CHECK(same(back.layers[i].norm2.scale, w.layers[i].norm2.scale));
    }
    CHECK(same(back.final_norm.shift, w.final_norm.shift));
    REQUIRE(back.head.has_value());
    CHECK(same(*back.head, *w.head));
}

TEST_CASE("missing tensor is named") {
    testing::TempDir dir("weights_missing");
    save_weights(random_weights(small_config(), 6), dir / "m.vitw");
    drop_tensor(dir / "m.vitw", "layer.1.attn.wk");
    try {
        load_weights(dir / "m.vitw", small_config());
        FAIL("expected MissingTensor");
    } catch (const MissingTensor& e) {
        CHECK(std::string(e.what()).find("layer.1.attn.wk") != std::string::npos);
    }
}

TEST_CASE("hidden width mismatch is a ShapeError") {
    testing::TempDir dir("weights_shape");
    save_weights(random_weights(small_config(), 7), dir / "m.vitw");
    ModelConfig other = small_config();
    other.hidden_dim = 16;
    other.num_heads = 4;
    CHECK_THROWS_AS(load_weights(dir / "m.vitw", other), ShapeError);
}

TEST_CASE("bad magic and truncation are CorruptFile") {
    testing::TempDir dir("weights_corrupt");
    save_weights(random_weights(small_config(), 8), dir / "m.vitw");
    auto bytes = io::read_file(dir / "m.vitw");
    auto cut = bytes;
    cut.resize(cut.size() - 5);
    io::write_file_atomic(dir / "cut.vitw", cut);
    CHECK_THROWS_AS(load_weights(dir / "cut.vitw"), CorruptFile);
    bytes[0] = 'X';
    io::write_file_atomic(dir / "magic.vitw", bytes);
    CHECK_THROWS_AS(load_weights(dir / "magic.vitw"), CorruptFile);
}

TEST_CASE("required names follow the documented scheme") {
    const auto names = required_tensor_names(small_config());
    auto has = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
    CHECK(has("patch_embed.weight"));
    CHECK(has("cls_token"));
    CHECK(has("pos_embed"));
    CHECK(has("layer.1.attn.wq"));
    CHECK(has("layer.0.mlp.b2"));
    CHECK(has("norm.scale"));
}
