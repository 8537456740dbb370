#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "config.hpp"

namespace iontrap::cli {

/// One output directory: artifacts, the config echo and, at the end, manifest.json.
class Run {
public:
    /// Picks the directory (--out, then [run] out, then $IONTRAP_OUTPUT_ROOT or
    /// ./iontrap-runs, as <command>-<hash>). A non-empty directory is refused
    /// unless `force` is set.
    Run(std::string command, const ExperimentConfig& config, std::uint64_t run_hash,
        const std::optional<std::filesystem::path>& out, bool force);

    const std::filesystem::path& dir() const noexcept { return dir_; }
    void write(const std::string& name, const std::string& content);
    void write_json(const std::string& name, const nlohmann::ordered_json& j);

    /// Writes manifest.json atomically; `error` is empty on success.
    void finish(const std::string& error = {});

private:
    std::string command_;
    std::uint64_t hash_;
    std::uint64_t seed_;
    std::string started_;
    std::filesystem::path dir_;
    struct FileEntry {
        std::string name;
        std::size_t bytes;
        std::uint64_t fnv1a;
    };
    std::vector<FileEntry> files_;
};

std::string hex64(std::uint64_t x);

/// Config sections as a JSON object of strings (run.out omitted).
nlohmann::ordered_json config_json(const ExperimentConfig& config);

}  // namespace iontrap::cli
