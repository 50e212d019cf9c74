#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <string>
#include <vector>

#include <json.hpp>

#include "resolveq/version.hpp"

namespace resolveq
{

// Reproducibility record serialized alongside every CLI output. The hash
// covers the deterministic fields only (not the timestamp), so identical
// commands produce identical hashes and byte-identical artifacts.
struct RunManifest
{
    std::string command;
    std::string tool_version = kVersion;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    nlohmann::json config = nlohmann::json::object();
    std::string timestamp; // RFC 3339 UTC, informational only

    nlohmann::json hashed_fields() const
    {
        nlohmann::json j;
        j["command"] = command;
        j["tool_version"] = tool_version;
        j["seed"] = seed;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["config"] = config;
        return j;
    }

    std::string hash_hex() const
    {
        const std::string dump = hashed_fields().dump();
        std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a 64
        for (unsigned char c : dump)
        {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j = hashed_fields();
        j["manifest_hash"] = hash_hex();
        j["timestamp"] = timestamp;
        return j;
    }

    static std::string now_utc()
    {
        const auto now = std::chrono::system_clock::now();
        const std::time_t t = std::chrono::system_clock::to_time_t(now);
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }
};

} // namespace resolveq
