#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vitclust {

/// Decoded 8-bit RGB raster, interleaved HWC.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

/// Model-ready image: planar CHW floats after resize and standardization.
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<float> values;

    float& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

/// Channel standardization applied after scaling to [0, 1].
struct Standardization {
    float mean = 0.5f;
    float std = 0.5f;
};

/// Decodes PNG or JPEG bytes (sniffed by signature). Throws DecodeError for
/// anything else, including truncated streams.
RgbImage decode_image(std::span<const std::uint8_t> bytes);

/// True when the bytes start with a PNG or JPEG signature and decode cleanly.
bool is_decodable_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const RgbImage& image);
std::vector<std::uint8_t> encode_jpeg(const RgbImage& image, int quality);

/// Bilinear resize with half-pixel centers; output is HWC float in source
/// units (0..255).
std::vector<float> resize_bilinear(const RgbImage& image, int out_height, int out_width);

/// Resize to image_size x image_size, scale to [0,1], then (v - mean) / std.
ImageTensor preprocess(const RgbImage& image, int image_size, Standardization norm = {});
ImageTensor preprocess(std::span<const std::uint8_t> raw_bytes, int image_size,
                       Standardization norm = {});

}  // namespace vitclust
