#include "vitclust/image.hpp"

#include "vitclust/error.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

namespace vitclust {

namespace {

bool has_png_signature(std::span<const std::uint8_t> b) {
    static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool has_jpeg_signature(std::span<const std::uint8_t> b) {
    return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
        throw DecodeError(std::string("PNG header: ") + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    RgbImage out;
    out.width = static_cast<int>(img.width);
    out.height = static_cast<int>(img.height);
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw DecodeError("PNG payload: " + msg);
    }
    return out;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// libjpeg reports truncated input as a warning and pads with gray; promote
// every warning to a hard failure.
void jpeg_emit_message(j_common_ptr cinfo, int level) {
    if (level < 0) jpeg_error_exit(cinfo);
}

RgbImage decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_emit_message;
    err.message[0] = '\0';

    RgbImage out;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DecodeError(std::string("JPEG: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out.width = static_cast<int>(cinfo.output_width);
    out.height = static_cast<int>(cinfo.output_height);
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

void require_nonempty(const RgbImage& image) {
    if (image.width <= 0 || image.height <= 0) {
        throw InvalidImage("image has zero dimension (" + std::to_string(image.width) + "x" +
                           std::to_string(image.height) + ")");
    }
}

}  // namespace

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
    RgbImage out;
    if (has_png_signature(bytes)) {
        out = decode_png(bytes);
    } else if (has_jpeg_signature(bytes)) {
        out = decode_jpeg(bytes);
    } else {
        throw DecodeError("unrecognized image signature");
    }
    require_nonempty(out);
    return out;
}

bool is_decodable_image(std::span<const std::uint8_t> bytes) {
    try {
        decode_image(bytes);
        return true;
    } catch (const Error&) {
        return false;
    }
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
    require_nonempty(image);
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
        throw IOError(std::string("PNG encode: ") + img.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        throw IOError(std::string("PNG encode: ") + img.message);
    }
    out.resize(size);
    return out;
}

std::vector<std::uint8_t> encode_jpeg(const RgbImage& image, int quality) {
    require_nonempty(image);
    jpeg_compress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(buffer);
        throw IOError(std::string("JPEG encode: ") + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = static_cast<JDIMENSION>(image.width);
    cinfo.image_height = static_cast<JDIMENSION>(image.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<JSAMPLE*>(image.pixels.data() +
                                         static_cast<std::size_t>(cinfo.next_scanline) * image.width * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::vector<std::uint8_t> out(buffer, buffer + size);
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    return out;
}

std::vector<float> resize_bilinear(const RgbImage& image, int out_height, int out_width) {
    require_nonempty(image);
    if (out_height <= 0 || out_width <= 0) throw InvalidImage("resize target must be positive");

    const double sy = static_cast<double>(image.height) / out_height;
    const double sx = static_cast<double>(image.width) / out_width;
    std::vector<float> out(static_cast<std::size_t>(out_height) * out_width * 3);

    auto source_coord = [](int dst, double scale, int extent, int& i0, int& i1, float& frac) {
        double s = (dst + 0.5) * scale - 0.5;
        if (s < 0) s = 0;
        i0 = static_cast<int>(std::floor(s));
        if (i0 >= extent - 1) {
            i0 = i1 = extent - 1;
            frac = 0.0f;
            return;
        }
        i1 = i0 + 1;
        frac = static_cast<float>(s - i0);
    };

    for (int y = 0; y < out_height; ++y) {
        int y0, y1;
        float fy;
        source_coord(y, sy, image.height, y0, y1, fy);
        for (int x = 0; x < out_width; ++x) {
            int x0, x1;
            float fx;
            source_coord(x, sx, image.width, x0, x1, fx);
            for (int c = 0; c < 3; ++c) {
                const float top = image.at(y0, x0, c) * (1.0f - fx) + image.at(y0, x1, c) * fx;
                const float bottom = image.at(y1, x0, c) * (1.0f - fx) + image.at(y1, x1, c) * fx;
                out[(static_cast<std::size_t>(y) * out_width + x) * 3 + c] = top * (1.0f - fy) + bottom * fy;
            }
        }
    }
    return out;
}

ImageTensor preprocess(const RgbImage& image, int image_size, Standardization norm) {
    const std::vector<float> resized = resize_bilinear(image, image_size, image_size);
    ImageTensor t;
    t.height = t.width = image_size;
    t.channels = 3;
    t.values.resize(static_cast<std::size_t>(3) * image_size * image_size);
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float unit = resized[(static_cast<std::size_t>(y) * image_size + x) * 3 + c] / 255.0f;
                t.at(c, y, x) = (unit - norm.mean) / norm.std;
            }
        }
    }
    return t;
}

ImageTensor preprocess(std::span<const std::uint8_t> raw_bytes, int image_size, Standardization norm) {
    return preprocess(decode_image(raw_bytes), image_size, norm);
}

}  // namespace vitclust
