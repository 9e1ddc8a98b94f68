// Run manifest: config snapshot, seed, version, timestamps and the index of
// every produced file. Written atomically (temp file + rename) as the last
// step of a CLI run.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace homog {

inline constexpr const char* kVersion = "0.1.0";

struct RunManifest {
    std::string config_text;
    std::uint64_t master_seed = 0;
    std::string version = kVersion;
    std::string started_at;
    std::string finished_at;
    struct Output {
        std::string path;
        std::string kind;
    };
    std::vector<Output> outputs;

    void add_output(const std::string& path, const std::string& kind) {
        outputs.push_back({path, kind});
    }
    void write_atomic(const std::string& path) const;
};

std::string timestamp_utc_now();

}  // namespace homog
