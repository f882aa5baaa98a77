#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nlv {

struct ManifestInput {
    std::string role;  ///< config, choices, indicators, spec, ...
    std::string path;
    std::string sha256;
    std::uintmax_t bytes = 0;
};

/// Provenance record written next to every run's outputs.
struct RunManifest {
    std::string tool_version;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string started_at;  ///< UTC, ISO 8601
    std::string finished_at;
    std::string status = "running";  ///< success | failed
    std::optional<std::string> failed_stage;
    std::optional<int> exit_code;
    std::string message;
    std::vector<std::string> stages_completed;
    std::vector<ManifestInput> inputs;
    std::vector<std::string> outputs;  ///< relative to the output directory

    /// Adds a file input with its SHA-256; throws ValidationError if unreadable.
    void add_input(const std::string& role, const std::filesystem::path& path);
    /// SHA-256 over the role/hash pairs of every input.
    std::string inputs_digest() const;
    nlohmann::json to_json() const;
    void write(const std::filesystem::path& path) const;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
std::string utc_timestamp();

}  // namespace nlv
