#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfmort/error.hpp"

namespace cfmort {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string content_hash(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

inline std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Writes through a sibling temporary and renames, so readers never see a partial file.
inline void write_text_file(const fs::path& path, std::string_view text) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot write '" + tmp.string() + "'");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) fail(ErrorKind::io, "short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::io, "cannot move '" + tmp.string() + "' into place: " + ec.message());
}

inline nlohmann::json read_json_file(const fs::path& path) {
    const auto text = read_text_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, path.string() + ": " + e.what());
    }
}

/// Records every file written into a run directory for the manifest.
class ArtifactWriter {
public:
    explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    const fs::path& dir() const { return dir_; }

    void write(const std::string& relative, std::string_view text) {
        write_text_file(dir_ / relative, text);
        std::lock_guard lock(mutex_);
        entries_.erase(std::remove_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.path == relative; }),
                       entries_.end());
        entries_.push_back({relative, text.size(), content_hash(text)});
    }

    void write_json(const std::string& relative, const nlohmann::json& j) { write(relative, j.dump(2) + "\n"); }

    /// manifest.json: artifact paths, sizes and hashes in path order, plus completion state.
    nlohmann::json manifest(const std::string& run_id, const std::string& status, const nlohmann::json& extra = {}) const {
        auto sorted = entries_;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
        nlohmann::json arts = nlohmann::json::array();
        for (const auto& e : sorted) arts.push_back({{"path", e.path}, {"bytes", e.bytes}, {"fnv1a64", e.hash}});
        nlohmann::json m{{"format", "cfmort-manifest-v1"},
                         {"run_id", run_id},
                         {"status", status},
                         {"versions", {{"cfmort", kVersion}, {"checkpoint", "cfmort-model-v1"}}},
                         {"artifacts", arts}};
        if (!extra.is_null())
            for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
        return m;
    }

    void write_manifest(const std::string& run_id, const std::string& status, const nlohmann::json& extra = {}) {
        write_text_file(dir_ / "manifest.json", manifest(run_id, status, extra).dump(2) + "\n");
    }

private:
    struct Entry {
        std::string path;
        std::size_t bytes;
        std::string hash;
    };
    fs::path dir_;
    std::vector<Entry> entries_;
    std::mutex mutex_;
};

/// index.json under an output root: one entry per run directory, sorted by id.
inline nlohmann::json read_run_index(const fs::path& root) {
    const auto path = root / "index.json";
    if (!fs::exists(path)) return {{"runs", nlohmann::json::array()}};
    auto j = read_json_file(path);
    if (!j.contains("runs") || !j["runs"].is_array()) fail(ErrorKind::schema, path.string() + ": missing 'runs' array");
    return j;
}

inline void upsert_run_index(const fs::path& root, const nlohmann::json& entry) {
    static std::mutex index_mutex;
    std::lock_guard lock(index_mutex);
    auto index = read_run_index(root);
    auto& runs = index["runs"];
    const auto id = entry.at("id").get<std::string>();
    nlohmann::json kept = nlohmann::json::array();
    for (const auto& r : runs)
        if (r.value("id", "") != id) kept.push_back(r);
    kept.push_back(entry);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.at("id") < b.at("id"); });
    index["runs"] = kept;
    write_text_file(root / "index.json", index.dump(2) + "\n");
}

}  // namespace cfmort
