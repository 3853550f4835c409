#include "vitclust/embedding_store.hpp"

#include "vitclust/error.hpp"
#include "vitclust/image.hpp"
#include "vitclust/io.hpp"
#include "vitclust/parallel.hpp"
#include "vitclust/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cstdlib>
#include <ctime>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace vitclust::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string ordered_record_line(const PostRecord& r) {
    nlohmann::ordered_json j;
    j["record_id"] = r.record_id;
    j["source"] = r.source;
    j["image_path"] = r.image_path;
    j["content_hash"] = r.content_hash;
    return j.dump();
}

PostRecord record_from(const json& j) {
    PostRecord r;
    r.record_id = j.at("record_id").get<std::int64_t>();
    r.source = j.value("source", std::string());
    r.image_path = j.value("image_path", std::string());
    r.content_hash = j.value("content_hash", std::string());
    return r;
}

}  // namespace

std::string timestamp_now() {
    std::time_t t;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
        t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    } else {
        t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Manifest ingest(const fs::path& directory, const std::string& source, const SkipLogger& on_skip) {
    std::error_code ec;
    if (!fs::is_directory(directory, ec)) throw IOError("not a readable directory: " + directory.string());

    std::vector<fs::path> files;
    fs::recursive_directory_iterator it(directory, fs::directory_options::skip_permission_denied, ec);
    if (ec) throw IOError("cannot read directory " + directory.string() + ": " + ec.message());
    for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) throw IOError("cannot read directory " + directory.string() + ": " + ec.message());
        if (it->is_regular_file(ec)) files.push_back(it->path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });

    struct Probe {
        std::string hash;
        std::string skip_reason;
    };
    std::vector<Probe> probes(files.size());
    parallel_for(files.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                const auto bytes = io::read_file(files[i]);
                decode_image(bytes);
                probes[i].hash = io::sha256_hex(bytes);
            } catch (const Error& e) {
                probes[i].skip_reason = e.kind() + ": " + e.what();
            }
        }
    });

    Manifest m;
    m.created = timestamp_now();
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!probes[i].skip_reason.empty()) {
            if (on_skip) on_skip(files[i], probes[i].skip_reason);
            continue;
        }
        PostRecord r;
        r.record_id = static_cast<std::int64_t>(m.records.size());
        r.source = source;
        r.image_path = files[i].generic_string();
        r.content_hash = std::move(probes[i].hash);
        m.records.push_back(std::move(r));
    }
    return m;
}

Manifest deduplicate(const Manifest& manifest) {
    Manifest out;
    out.created = manifest.created;
    out.deduplicated = true;
    std::unordered_set<std::string> seen;
    for (const auto& r : manifest.records) {
        if (seen.insert(r.content_hash).second) out.records.push_back(r);
    }
    return out;
}

Manifest sample(const Manifest& manifest, std::size_t n, std::uint64_t seed) {
    const std::size_t total = manifest.size();
    if (n > total) {
        throw SampleError("cannot sample " + std::to_string(n) + " records from " + std::to_string(total));
    }
    Manifest out;
    out.created = manifest.created;
    out.deduplicated = manifest.deduplicated;
    out.records.reserve(n);
    // Selection sampling: each record is kept with probability
    // (still needed) / (still available), which is uniform over n-subsets.
    Rng rng(seed);
    std::size_t needed = n;
    for (std::size_t i = 0; i < total && needed > 0; ++i) {
        const std::size_t available = total - i;
        if (uniform01(rng) * static_cast<double>(available) < static_cast<double>(needed)) {
            out.records.push_back(manifest.records[i]);
            --needed;
        }
    }
    return out;
}

fs::path sidecar_path(const fs::path& store_path) { return fs::path(store_path.string() + ".jsonl"); }

std::string record_to_jsonl(const PostRecord& record) { return ordered_record_line(record); }

PostRecord record_from_json(const std::string& line) {
    try {
        return record_from(json::parse(line));
    } catch (const json::exception& e) {
        throw CorruptFile(std::string("malformed record line: ") + e.what());
    }
}

void write_store(const EmbeddingMatrix& matrix, const Manifest& manifest, const fs::path& path) {
    if (static_cast<std::size_t>(matrix.rows()) != manifest.size()) {
        throw AlignmentError("matrix has " + std::to_string(matrix.rows()) + " rows but manifest has " +
                             std::to_string(manifest.size()) + " records");
    }
    if (matrix.rows() > std::numeric_limits<std::uint32_t>::max() ||
        matrix.dim() > std::numeric_limits<std::uint32_t>::max()) {
        throw HeaderError("store dimensions exceed the u32 header fields");
    }
    io::ByteWriter w;
    w.bytes(kStoreMagic, 8);
    w.u32(static_cast<std::uint32_t>(matrix.rows()));
    w.u32(static_cast<std::uint32_t>(matrix.dim()));
    w.u8(matrix.normalized ? 1 : 0);
    w.buffer().reserve(w.buffer().size() + static_cast<std::size_t>(matrix.values.size()) * 4);
    for (Eigen::Index i = 0; i < matrix.values.size(); ++i) w.f32(matrix.values.data()[i]);

    std::string sidecar;
    for (const auto& r : manifest.records) {
        sidecar += ordered_record_line(r);
        sidecar += '\n';
    }
    // Sidecar first: a reader that sees the new store also sees its rows.
    io::write_file_atomic(sidecar_path(path), sidecar);
    io::write_file_atomic(path, w.buffer());
}

namespace {

constexpr std::size_t kHeaderBytes = 8 + 4 + 4 + 1;

StoreHeader parse_header(std::span<const std::uint8_t> bytes, const fs::path& path) {
    if (bytes.size() < kHeaderBytes) throw HeaderError(path.string() + ": file shorter than store header");
    if (std::memcmp(bytes.data(), kStoreMagic, 8) != 0) throw HeaderError(path.string() + ": missing EMBS0001 magic");
    io::ByteReader r(bytes.subspan(8));
    StoreHeader h;
    h.rows = r.u32();
    h.dim = r.u32();
    const std::uint8_t flag = r.u8();
    if (flag > 1) throw HeaderError(path.string() + ": normalized flag must be 0 or 1");
    if (h.dim == 0 && h.rows > 0) throw HeaderError(path.string() + ": zero dimension with non-empty payload");
    h.normalized = flag == 1;
    return h;
}

}  // namespace

StoreHeader read_store_header(const fs::path& path) {
    const auto bytes = io::read_file(path);
    return parse_header(bytes, path);
}

StoreContents read_store(const fs::path& path) {
    const auto bytes = io::read_file(path);
    const StoreHeader h = parse_header(bytes, path);
    const std::size_t expected = static_cast<std::size_t>(h.rows) * h.dim * 4;
    const std::size_t payload = bytes.size() - kHeaderBytes;
    if (payload < expected) {
        throw TruncatedPayload(path.string() + ": payload has " + std::to_string(payload) + " bytes, header implies " +
                               std::to_string(expected));
    }
    if (payload > expected) {
        throw HeaderError(path.string() + ": " + std::to_string(payload - expected) +
                          " trailing bytes beyond the declared rows x dim");
    }

    StoreContents out;
    out.matrix.normalized = h.normalized;
    out.matrix.values.resize(h.rows, h.dim);
    io::ByteReader r{std::span<const std::uint8_t>(bytes).subspan(kHeaderBytes)};
    for (Eigen::Index i = 0; i < out.matrix.values.size(); ++i) out.matrix.values.data()[i] = r.f32();

    const fs::path side = sidecar_path(path);
    const auto side_bytes = io::read_file(side);
    std::istringstream lines(std::string(side_bytes.begin(), side_bytes.end()));
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        out.manifest.records.push_back(record_from_json(line));
    }
    if (out.manifest.size() != h.rows) {
        throw AlignmentError(side.string() + " has " + std::to_string(out.manifest.size()) + " rows, store has " +
                             std::to_string(h.rows));
    }
    return out;
}

std::string manifest_to_json(const Manifest& manifest) {
    nlohmann::ordered_json j;
    j["created"] = manifest.created;
    j["deduplicated"] = manifest.deduplicated;
    j["records"] = nlohmann::ordered_json::array();
    for (const auto& r : manifest.records) j["records"].push_back(nlohmann::ordered_json::parse(ordered_record_line(r)));
    return j.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        Manifest m;
        m.created = j.value("created", std::string());
        m.deduplicated = j.value("deduplicated", false);
        for (const auto& r : j.at("records")) m.records.push_back(record_from(r));
        return m;
    } catch (const json::exception& e) {
        throw CorruptFile(std::string("malformed manifest: ") + e.what());
    }
}

}  // namespace vitclust::store
