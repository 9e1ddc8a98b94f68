// Sectioned key = value configuration files, with dotted-path overrides.
// '#' starts a comment; values keep internal whitespace.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "homog/common.hpp"

namespace homog {

class Config {
  public:
    static Config parse_file(const std::string& path);
    static Config parse_text(const std::string& text);

    void set(const std::string& section, const std::string& key, const std::string& value);
    // "section.key=value"
    void apply_override(const std::string& dotted);

    bool has(const std::string& section, const std::string& key) const;

    // Throwing getters name the missing key in the message.
    std::string get_string(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key) const;
    std::int64_t get_int(const std::string& section, const std::string& key) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    std::vector<double> get_double_list(const std::string& section, const std::string& key) const;

    // Defaulted variants.
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key,
                         std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                        const std::vector<double>& fallback) const;

    std::string serialize() const;  // sections and keys sorted

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

  private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace homog
