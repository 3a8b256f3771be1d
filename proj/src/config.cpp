#include "prunekit/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace prunekit {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_text(const std::string& text, const std::set<std::string>& allowed) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw config_error("line " + std::to_string(lineno) + ": empty key");
        if (!allowed.count(key))
            throw config_error("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (cfg.values_.count(key))
            throw config_error("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

Config Config::parse_file(const std::string& path, const std::set<std::string>& allowed) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), allowed);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long Config::get_int(const std::string& key, long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const long v = std::stol(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw config_error("key '" + key + "': not an integer: '" + it->second + "'");
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw config_error("key '" + key + "': not a number: '" + it->second + "'");
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw config_error("key '" + key + "': not a boolean: '" + it->second + "'");
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw config_error("key '" + key + "': not an unsigned integer: '" + it->second + "'");
    }
}

}  // namespace prunekit
