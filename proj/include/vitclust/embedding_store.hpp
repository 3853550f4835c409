#pragma once

#include "vitclust/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace vitclust::store {

struct PostRecord {
    std::int64_t record_id = 0;
    std::string source;
    std::string image_path;
    std::string content_hash;  // lowercase hex SHA-256 of the raw file bytes

    bool operator==(const PostRecord&) const = default;
};

struct Manifest {
    std::vector<PostRecord> records;
    std::string created;  // ISO-8601 UTC
    bool deduplicated = false;

    std::size_t size() const { return records.size(); }
    bool operator==(const Manifest&) const = default;
};

/// Row i belongs to manifest record i.
struct EmbeddingMatrix {
    MatrixF values;
    bool normalized = false;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }
};

/// Called for each file that is skipped during ingestion.
using SkipLogger = std::function<void(const std::filesystem::path&, const std::string& reason)>;

/// Current UTC time in ISO-8601, or SOURCE_DATE_EPOCH when that is set so
/// manifests can be reproduced byte-for-byte.
std::string timestamp_now();

/// One record per decodable PNG/JPEG under `directory` (recursive), ordered
/// by path. Record ids are 0-based positions. Throws IOError if the
/// directory cannot be read.
Manifest ingest(const std::filesystem::path& directory, const std::string& source = "local",
                const SkipLogger& on_skip = {});

/// Keeps the first record per content hash, preserving order.
Manifest deduplicate(const Manifest& manifest);

/// Uniform sample of n records without replacement; surviving records keep
/// their relative order. Throws SampleError when n exceeds the manifest.
Manifest sample(const Manifest& manifest, std::size_t n, std::uint64_t seed);

/// Embedding store (little-endian):
///   "EMBS0001" | u32 rows | u32 dim | u8 normalized | rows*dim float32, row-major
/// with a JSON-lines sidecar at `sidecar_path(path)`, one record per row.
inline constexpr char kStoreMagic[8] = {'E', 'M', 'B', 'S', '0', '0', '0', '1'};

std::filesystem::path sidecar_path(const std::filesystem::path& store_path);

/// Writes both files atomically. Throws AlignmentError if row counts differ.
void write_store(const EmbeddingMatrix& matrix, const Manifest& manifest, const std::filesystem::path& path);

struct StoreContents {
    EmbeddingMatrix matrix;
    Manifest manifest;
};

/// Errors: HeaderError (magic/dimension header, trailing bytes),
/// TruncatedPayload (short payload), AlignmentError (sidecar row count), CorruptFile
/// (malformed sidecar line).
StoreContents read_store(const std::filesystem::path& path);

/// Reads only the fixed-size header: (rows, dim, normalized).
struct StoreHeader {
    std::uint32_t rows = 0;
    std::uint32_t dim = 0;
    bool normalized = false;
};
StoreHeader read_store_header(const std::filesystem::path& path);

/// Manifest document written by the ingest stage.
std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& text);

std::string record_to_jsonl(const PostRecord& record);
PostRecord record_from_json(const std::string& line);

}  // namespace vitclust::store
