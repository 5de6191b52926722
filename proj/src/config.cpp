#include "dhvae/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dhvae/errors.hpp"

namespace dhvae {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& raw, const std::string& key) {
    std::string s = trim(raw);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
        throw ConfigError("key '" + key + "': expected a [..] list, got '" + raw + "'");
    s = s.substr(1, s.size() - 2);
    std::vector<std::string> items;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, ',')) {
        const std::string t = trim(cur);
        if (!t.empty()) items.push_back(t);
    }
    return items;
}

std::int64_t to_int(const std::string& t, const std::string& key) {
    std::int64_t v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw ConfigError("key '" + key + "': expected integer, got '" + t + "'");
    return v;
}

double to_double(const std::string& t, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(t, &pos);
        if (pos != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected number, got '" + t + "'");
    }
}

}  // namespace

ConfigMap ConfigMap::parse_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_string(ss.str(), path.string());
}

ConfigMap ConfigMap::parse_string(const std::string& text, const std::string& origin) {
    ConfigMap cm;
    cm.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (cm.values_.count(key))
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        cm.values_[key] = val;
    }
    return cm;
}

bool ConfigMap::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& ConfigMap::raw(const std::string& key) {
    consumed_.insert(key);
    return values_.at(key);
}

std::int64_t ConfigMap::get_int(const std::string& key, std::int64_t def) {
    if (!has(key)) return def;
    return to_int(raw(key), key);
}

double ConfigMap::get_double(const std::string& key, double def) {
    if (!has(key)) return def;
    return to_double(raw(key), key);
}

bool ConfigMap::get_bool(const std::string& key, bool def) {
    if (!has(key)) return def;
    const std::string& t = raw(key);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + t + "'");
}

std::string ConfigMap::get_string(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    std::string t = raw(key);
    if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
    return t;
}

std::vector<std::int64_t> ConfigMap::get_int_list(const std::string& key, std::vector<std::int64_t> def) {
    if (!has(key)) return def;
    std::vector<std::int64_t> out;
    for (const auto& item : split_list(raw(key), key)) out.push_back(to_int(item, key));
    return out;
}

std::vector<double> ConfigMap::get_double_list(const std::string& key, std::vector<double> def) {
    if (!has(key)) return def;
    std::vector<double> out;
    for (const auto& item : split_list(raw(key), key)) out.push_back(to_double(item, key));
    return out;
}

void ConfigMap::finish() const {
    std::string unknown;
    for (const auto& [k, v] : values_) {
        if (!consumed_.count(k)) {
            if (!unknown.empty()) unknown += ", ";
            unknown += k;
        }
    }
    if (!unknown.empty())
        throw ConfigError(origin_ + ": unknown config keys: " + unknown);
}

std::string ConfigMap::canonical_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

std::uint64_t fnv1a_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace dhvae
