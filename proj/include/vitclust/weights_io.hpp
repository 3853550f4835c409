#pragma once

#include "vitclust/vit.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace vitclust::vit {

/// Weight file layout (all integers little-endian):
///
///   "VITW0001"                  8-byte magic
///   u64 header_len
///   header_len bytes of UTF-8 JSON:
///     { "__metadata__": { "config": {...} },
///       "<tensor name>": { "dtype": "float32", "shape": [...], "offset": <bytes> }, ... }
///   raw float32 payload; each offset is relative to the payload start.
///
/// Tensor names:
///   patch_embed.weight  [P*P*C, D]     cls_token [D]     pos_embed [N+1, D]
///   layer.{i}.norm1.scale / .shift [D]
///   layer.{i}.attn.{wq,wk,wv,wo} [D, D]   layer.{i}.attn.{bq,bk,bv,bo} [D]
///   layer.{i}.norm2.scale / .shift [D]
///   layer.{i}.mlp.w1 [D, M]  .b1 [M]  .w2 [M, D]  .b2 [D]
///   norm.scale / .shift [D]
///   head.weight [D, K]  (optional)
inline constexpr char kWeightMagic[8] = {'V', 'I', 'T', 'W', '0', '0', '0', '1'};

/// Every tensor name a complete model of this config must carry (head excluded).
std::vector<std::string> required_tensor_names(const ModelConfig& config);

void save_weights(const ModelWeights& weights, const std::filesystem::path& path);

/// Loads and checks against `config`. Errors: CorruptFile (bad magic,
/// header or payload bounds), MissingTensor (naming the tensor), ShapeError.
ModelWeights load_weights(const std::filesystem::path& path, const ModelConfig& config);

/// Loads using the config recorded in the file's metadata.
ModelWeights load_weights(const std::filesystem::path& path);

/// Reads only the recorded config.
ModelConfig read_weight_config(const std::filesystem::path& path);

}  // namespace vitclust::vit
