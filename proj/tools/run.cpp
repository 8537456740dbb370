#include "run.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>

#include "iontrap/error.hpp"
#include "iontrap/hash.hpp"
#include "iontrap/io.hpp"

#ifndef IONTRAP_VERSION
#define IONTRAP_VERSION "unknown"
#endif

namespace iontrap::cli {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::string hex64(std::uint64_t x) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

nlohmann::ordered_json config_json(const ExperimentConfig& config) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [section, keys] : config.raw) {
        nlohmann::ordered_json s = nlohmann::ordered_json::object();
        for (const auto& [k, v] : keys)
            if (!(section == "run" && k == "out")) s[k] = v;
        j[section] = s;
    }
    return j;
}

Run::Run(std::string command, const ExperimentConfig& config, std::uint64_t run_hash,
         const std::optional<fs::path>& out, bool force)
    : command_(std::move(command)), hash_(run_hash), seed_(config.seed), started_(utc_now()) {
    if (out) {
        dir_ = *out;
    } else if (config.out) {
        dir_ = *config.out;
    } else {
        const char* root = std::getenv("IONTRAP_OUTPUT_ROOT");
        dir_ = fs::path(root && *root ? root : "iontrap-runs") / (command_ + "-" + hex64(hash_).substr(0, 12));
    }
    std::error_code ec;
    if (fs::exists(dir_, ec)) {
        if (!fs::is_directory(dir_, ec)) throw IoError(dir_.string() + " exists and is not a directory");
        if (!fs::is_empty(dir_, ec) && !force)
            throw UsageError("output directory " + dir_.string() + " is not empty (use --force to overwrite)");
    }
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
    write("config.ini", config.canonical_text());
}

void Run::write(const std::string& name, const std::string& content) {
    io::write_file_atomic(dir_ / name, content);
    files_.push_back({name, content.size(), Fnv1a().text(content).digest()});
}

void Run::write_json(const std::string& name, const nlohmann::ordered_json& j) { write(name, j.dump(2) + "\n"); }

void Run::finish(const std::string& error) {
    nlohmann::ordered_json m;
    m["tool"] = "iontrap";
    m["version"] = IONTRAP_VERSION;
    m["command"] = command_;
    m["config_hash"] = hex64(hash_);
    m["seed"] = seed_;
    m["started_utc"] = started_;
    m["finished_utc"] = utc_now();
    m["status"] = error.empty() ? "ok" : "failed";
    if (!error.empty()) m["error"] = error;
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (const auto& f : files_)
        files.push_back({{"name", f.name}, {"bytes", f.bytes}, {"fnv1a", hex64(f.fnv1a)}});
    m["files"] = files;
    io::write_file_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
}

}  // namespace iontrap::cli
