#pragma once

// Flat "dotted.key = value" config files. Values are ints, floats, bools,
// strings or bracketed lists. Every key must be consumed by the time
// finish() runs; unknown keys are a hard error.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace dhvae {

class ConfigMap {
  public:
    static ConfigMap parse_file(const std::filesystem::path& path);
    static ConfigMap parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;

    std::int64_t get_int(const std::string& key, std::int64_t def);
    double get_double(const std::string& key, double def);
    bool get_bool(const std::string& key, bool def);
    std::string get_string(const std::string& key, const std::string& def);
    std::vector<std::int64_t> get_int_list(const std::string& key, std::vector<std::int64_t> def);
    std::vector<double> get_double_list(const std::string& key, std::vector<double> def);

    // throws ConfigError listing all keys that were never consumed
    void finish() const;

    // canonical "key = value" text of all keys, sorted; used for config hashes
    std::string canonical_text() const;

  private:
    std::string origin_;
    std::map<std::string, std::string> values_;  // raw value text
    mutable std::set<std::string> consumed_;
    const std::string& raw(const std::string& key);
};

std::uint64_t fnv1a_hash(const std::string& s);

}  // namespace dhvae
