#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace prunekit {

// Flat `key = value` text config. One assignment per line; `#` starts a
// comment; blank lines are ignored. Duplicate keys and junk lines are errors
// (DataError) carrying the file name and line number, as are type mismatches
// when a getter parses the value.
struct KvConfig {
    std::string source;  // file name (or synthetic name) for diagnostics
    std::map<std::string, std::string> values;
    std::map<std::string, int> lines;

    bool has(const std::string& key) const { return values.count(key) != 0; }

    std::string get_string(const std::string& key) const;  // throws if missing
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated lists; empty value -> empty list.
    std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const;
    std::vector<std::string> get_string_list(const std::string& key) const;

    // Rejects any present key outside `allowed`, with its line number.
    void require_known_keys(const std::set<std::string>& allowed) const;

    [[noreturn]] void fail(const std::string& key, const std::string& message) const;
};

KvConfig parse_kv_file(const std::string& path);
KvConfig parse_kv_text(const std::string& text, const std::string& source_name);

}  // namespace prunekit
