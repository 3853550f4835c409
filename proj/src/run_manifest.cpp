#include "vitclust/run_manifest.hpp"

#include "vitclust/error.hpp"
#include "vitclust/io.hpp"

#include <fstream>
#include <sstream>

namespace vitclust::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string version_string() { return "0.1.0"; }

fs::path run_manifest_path(const fs::path& primary_output) { return fs::path(primary_output.string() + ".run.json"); }

FileDigest digest(const fs::path& path) { return FileDigest{path.generic_string(), io::sha256_file(path)}; }

namespace {

ordered_json digests_json(const std::vector<FileDigest>& files) {
    ordered_json arr = ordered_json::array();
    for (const auto& f : files) arr.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return arr;
}

std::vector<FileDigest> digests_from(const ordered_json& arr) {
    std::vector<FileDigest> out;
    for (const auto& e : arr) out.push_back({e.at("path").get<std::string>(), e.at("sha256").get<std::string>()});
    return out;
}

}  // namespace

void write_run_manifest(const RunManifest& m, const fs::path& primary_output) {
    ordered_json j;
    j["tool"] = m.tool;
    j["version"] = m.version.empty() ? version_string() : m.version;
    j["subcommand"] = m.subcommand;
    j["config"] = m.config;
    j["inputs"] = digests_json(m.inputs);
    j["outputs"] = digests_json(m.outputs);
    j["seed"] = m.seed;
    j["started"] = m.started;
    j["duration_seconds"] = m.duration_seconds;
    j["notes"] = m.notes;
    io::write_file_atomic(run_manifest_path(primary_output), j.dump(2) + "\n");
}

RunManifest read_run_manifest(const fs::path& path) {
    const auto bytes = io::read_file(path);
    try {
        const auto j = ordered_json::parse(bytes.begin(), bytes.end());
        RunManifest m;
        m.tool = j.value("tool", std::string("vitclust"));
        m.version = j.value("version", std::string());
        m.subcommand = j.at("subcommand").get<std::string>();
        m.config = j.at("config");
        m.inputs = digests_from(j.at("inputs"));
        m.outputs = digests_from(j.at("outputs"));
        m.seed = j.value("seed", std::uint64_t{0});
        m.started = j.value("started", std::string());
        m.duration_seconds = j.value("duration_seconds", 0.0);
        if (j.contains("notes")) m.notes = j.at("notes");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(path.string() + ": malformed run manifest: " + e.what());
    }
}

bool is_cached(const fs::path& primary_output, const std::string& subcommand, const ordered_json& config,
               const std::vector<fs::path>& inputs) {
    const fs::path record = run_manifest_path(primary_output);
    std::error_code ec;
    if (!fs::exists(record, ec) || !fs::exists(primary_output, ec)) return false;
    try {
        const RunManifest prior = read_run_manifest(record);
        if (prior.version != version_string()) return false;
        if (prior.subcommand != subcommand || prior.config != config) return false;
        if (prior.inputs.size() != inputs.size()) return false;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (prior.inputs[i].path != inputs[i].generic_string()) return false;
            if (prior.inputs[i].sha256 != io::sha256_file(inputs[i])) return false;
        }
        for (const auto& out : prior.outputs) {
            if (!fs::exists(out.path, ec) || io::sha256_file(out.path) != out.sha256) return false;
        }
        return true;
    } catch (const Error&) {
        return false;
    }
}

}  // namespace vitclust::pipeline
