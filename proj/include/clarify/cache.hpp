#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "clarify/errors.hpp"
#include "clarify/rng.hpp"

namespace clarify {

// Content-addressed cache of backend responses, one JSON file per request.
// Files store the full request next to the response so entries are
// auditable and key collisions are detectable instead of silent.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    static std::string key_for(const nlohmann::json& request) {
        const std::string canonical = request.dump();
        std::ostringstream hex;
        hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a(canonical);
        return hex.str();
    }

    std::optional<nlohmann::json> get(const std::string& key, const nlohmann::json& request) const {
        const auto path = entry_path(key);
        std::string text;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            std::ifstream in(path);
            if (!in) return std::nullopt;
            std::ostringstream buffer;
            buffer << in.rdbuf();
            text = buffer.str();
        }
        nlohmann::json entry;
        try {
            entry = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw CacheCorruptionError("unreadable cache entry '" + path.string() +
                                       "': " + e.what());
        }
        if (!entry.contains("request") || !entry.contains("response")) {
            throw CacheCorruptionError("cache entry '" + path.string() + "' missing fields");
        }
        if (entry["request"] != request) {
            throw CacheCorruptionError("cache entry '" + path.string() +
                                       "' stores a different request (key collision?)");
        }
        return entry["response"];
    }

    void put(const std::string& key, const nlohmann::json& request,
             const nlohmann::json& response) const {
        nlohmann::json entry;
        entry["request"] = request;
        entry["response"] = response;
        const auto path = entry_path(key);
        const auto tmp = path.string() + ".tmp";
        std::lock_guard<std::mutex> lock(mutex_);
        {
            std::ofstream out(tmp);
            if (!out) throw Error("cannot write cache entry '" + tmp + "'");
            out << entry.dump(2) << '\n';
        }
        std::filesystem::rename(tmp, path);
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path entry_path(const std::string& key) const {
        return dir_ / (key + ".json");
    }

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

}  // namespace clarify
