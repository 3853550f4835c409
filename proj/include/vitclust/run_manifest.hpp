#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vitclust::pipeline {

struct FileDigest {
    std::string path;
    std::string sha256;
};

/// Provenance record written next to every stage output as
/// `<primary output>.run.json`.
struct RunManifest {
    std::string tool = "vitclust";
    std::string version;
    std::string subcommand;
    nlohmann::ordered_json config;
    std::vector<FileDigest> inputs;
    std::vector<FileDigest> outputs;
    std::uint64_t seed = 0;
    std::string started;
    double duration_seconds = 0.0;
    nlohmann::ordered_json notes = nlohmann::ordered_json::object();
};

std::filesystem::path run_manifest_path(const std::filesystem::path& primary_output);

FileDigest digest(const std::filesystem::path& path);

void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& primary_output);
RunManifest read_run_manifest(const std::filesystem::path& path);

/// True when a previous run of the same subcommand with the same resolved
/// config consumed inputs with identical hashes and every recorded output
/// still has its recorded hash.
bool is_cached(const std::filesystem::path& primary_output, const std::string& subcommand,
               const nlohmann::ordered_json& config, const std::vector<std::filesystem::path>& inputs);

std::string version_string();

}  // namespace vitclust::pipeline
