#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "prunekit/model.hpp"  // config_error

namespace prunekit {

// Flat `key = value` text config. `#` starts a comment, blank lines are
// skipped. Keys not in the allowed set are errors.
class Config {
  public:
    static Config parse_file(const std::string& path, const std::set<std::string>& allowed);
    static Config parse_text(const std::string& text, const std::set<std::string>& allowed);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    long get_int(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace prunekit
