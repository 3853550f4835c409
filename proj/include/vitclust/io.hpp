#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vitclust::io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file, fsyncs, then renames over `path`, so
/// readers see either the old file or the complete new one.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Appends little-endian encodings to a byte buffer.
class ByteWriter {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buffer_.insert(buffer_.end(), p, p + n);
    }
    void u8(std::uint8_t v) { buffer_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }

    std::vector<std::uint8_t>& buffer() { return buffer_; }

private:
    std::vector<std::uint8_t> buffer_;
};

/// Bounds-checked little-endian cursor. `truncated()` reports whether any
/// read ran past the end; reads past the end yield zero.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    bool take(void* out, std::size_t n) {
        if (n > remaining()) {
            truncated_ = true;
            pos_ = data_.size();
            std::memset(out, 0, n);
            return false;
        }
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
        return true;
    }
    std::uint8_t u8() {
        std::uint8_t v = 0;
        take(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        take(b, 4);
        return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 | std::uint32_t{b[3]} << 24;
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | hi << 32;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool truncated() const { return truncated_; }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    bool truncated_ = false;
};

}  // namespace vitclust::io
