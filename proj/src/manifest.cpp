#include "homog/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "homog/common.hpp"

namespace homog {

std::string timestamp_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void RunManifest::write_atomic(const std::string& path) const {
    nlohmann::json j;
    j["version"] = version;
    j["master_seed"] = master_seed;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["config"] = config_text;
    j["outputs"] = nlohmann::json::array();
    for (const auto& o : outputs) j["outputs"].push_back({{"path", o.path}, {"kind", o.kind}});

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw DataError("cannot write manifest: " + tmp);
        os << j.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("cannot finalize manifest: " + path);
}

}  // namespace homog
