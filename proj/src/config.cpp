#include "homog/config.hpp"

#include <fstream>
#include <sstream>

namespace homog {

namespace {
std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}
}  // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_text(ss.str());
}

Config Config::parse_text(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": malformed section");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
            cfg.sections_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
}

void Config::apply_override(const std::string& dotted) {
    const auto eq = dotted.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be section.key=value: " + dotted);
    const std::string path = trim(dotted.substr(0, eq));
    const std::string value = trim(dotted.substr(eq + 1));
    const auto dot = path.find('.');
    if (dot == std::string::npos) throw ConfigError("override must be section.key=value: " + dotted);
    set(path.substr(0, dot), path.substr(dot + 1), value);
}

bool Config::has(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
}

std::string Config::get_string(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    if (it == sections_.end() || it->second.count(key) == 0)
        throw ConfigError("missing required config key: " + section + "." + key);
    return it->second.at(key);
}

double Config::get_double(const std::string& section, const std::string& key) const {
    const std::string s = get_string(section, key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + section + "." + key + " is not a number: " + s);
    }
}

std::int64_t Config::get_int(const std::string& section, const std::string& key) const {
    const std::string s = get_string(section, key);
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + section + "." + key + " is not an integer: " + s);
    }
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key) const {
    const std::string s = get_string(section, key);
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + section + "." + key + " is not an unsigned integer: " + s);
    }
}

bool Config::get_bool(const std::string& section, const std::string& key) const {
    const std::string s = get_string(section, key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("config key " + section + "." + key + " is not a boolean: " + s);
}

std::vector<double> Config::get_double_list(const std::string& section,
                                            const std::string& key) const {
    const std::string s = get_string(section, key);
    std::vector<double> out;
    std::string token;
    std::istringstream is(s);
    while (std::getline(is, token, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        try {
            out.push_back(std::stod(token));
        } catch (const std::exception&) {
            throw ConfigError("config key " + section + "." + key + " has a bad list entry: " + token);
        }
    }
    if (out.empty()) throw ConfigError("config key " + section + "." + key + " is an empty list");
    return out;
}

std::string Config::get_string(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
    return has(section, key) ? get_string(section, key) : fallback;
}
double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}
std::int64_t Config::get_int(const std::string& section, const std::string& key,
                             std::int64_t fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}
std::uint64_t Config::get_u64(const std::string& section, const std::string& key,
                              std::uint64_t fallback) const {
    return has(section, key) ? get_u64(section, key) : fallback;
}
bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    return has(section, key) ? get_bool(section, key) : fallback;
}
std::vector<double> Config::get_double_list(const std::string& section, const std::string& key,
                                            const std::vector<double>& fallback) const {
    return has(section, key) ? get_double_list(section, key) : fallback;
}

std::string Config::serialize() const {
    std::ostringstream os;
    for (const auto& [section, kv] : sections_) {
        os << "[" << section << "]\n";
        for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
        os << "\n";
    }
    return os.str();
}

}  // namespace homog
