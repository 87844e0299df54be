#include "prunekit/kvconfig.hpp"

#include <fstream>
#include <sstream>

#include "prunekit/errors.hpp"

namespace prunekit {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail_at(const std::string& source, int line, const std::string& message) {
    throw DataError(source + ":" + std::to_string(line) + ": " + message);
}

}  // namespace

std::string KvConfig::get_string(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw DataError(source + ": missing required key '" + key + "'");
    return it->second;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

void KvConfig::fail(const std::string& key, const std::string& message) const {
    auto it = lines.find(key);
    if (it != lines.end()) fail_at(source, it->second, "key '" + key + "': " + message);
    throw DataError(source + ": key '" + key + "': " + message);
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) fail(key, "trailing junk in number '" + it->second + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(key, "not a number: '" + it->second + "'");
    } catch (const std::out_of_range&) {
        fail(key, "number out of range: '" + it->second + "'");
    }
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t used = 0;
        const long long v = std::stoll(it->second, &used);
        if (used != it->second.size()) fail(key, "trailing junk in integer '" + it->second + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(key, "not an integer: '" + it->second + "'");
    } catch (const std::out_of_range&) {
        fail(key, "integer out of range: '" + it->second + "'");
    }
}

std::uint64_t KvConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    // stoull silently wraps negative input; reject it up front.
    if (!it->second.empty() && it->second[0] == '-') {
        fail(key, "not an unsigned integer: '" + it->second + "'");
    }
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(it->second, &used);
        if (used != it->second.size()) fail(key, "trailing junk in integer '" + it->second + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(key, "not an unsigned integer: '" + it->second + "'");
    } catch (const std::out_of_range&) {
        fail(key, "integer out of range: '" + it->second + "'");
    }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    fail(key, "not a boolean: '" + v + "'");
}

std::vector<double> KvConfig::get_double_list(const std::string& key, const std::vector<double>& fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) fail(key, "empty list element");
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) fail(key, "trailing junk in list element '" + item + "'");
            out.push_back(v);
        } catch (const std::invalid_argument&) {
            fail(key, "not a number in list: '" + item + "'");
        } catch (const std::out_of_range&) {
            fail(key, "number out of range in list: '" + item + "'");
        }
    }
    return out;
}

std::vector<std::string> KvConfig::get_string_list(const std::string& key) const {
    std::vector<std::string> out;
    auto it = values.find(key);
    if (it == values.end()) return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void KvConfig::require_known_keys(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : values) {
        if (!allowed.count(key)) {
            fail_at(source, lines.at(key), "unknown key '" + key + "'");
        }
    }
}

KvConfig parse_kv_text(const std::string& text, const std::string& source_name) {
    KvConfig cfg;
    cfg.source = source_name;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail_at(source_name, line_no, "expected 'key = value', got '" + trim(raw) + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail_at(source_name, line_no, "empty key");
        if (cfg.values.count(key)) {
            fail_at(source_name, line_no,
                    "duplicate key '" + key + "' (first at line " + std::to_string(cfg.lines[key]) + ")");
        }
        cfg.values[key] = value;
        cfg.lines[key] = line_no;
    }
    return cfg;
}

KvConfig parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_kv_text(ss.str(), path);
}

}  // namespace prunekit
