#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace resset {

// Plain-text `key = value` configuration. Blank lines and lines starting with
// '#' are ignored. Every key must be declared with a default before a file or
// override may set it; anything else is a ConfigError.
class Config {
public:
    void declare(const std::string& key, std::string default_value);
    bool declared(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, std::string value);
    void merge_text(std::string_view text, std::string_view origin = "config");
    void merge_file(const std::string& path);
    // "key=value" items, typically from the command line.
    void merge_overrides(const std::vector<std::string>& items);

    const std::string& raw(const std::string& key) const;
    std::string get_string(const std::string& key) const { return raw(key); }
    long long get_int(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    // Comma-separated items with surrounding whitespace trimmed; empty items dropped.
    std::vector<std::string> get_list(const std::string& key) const;

    // Keys in lexicographic order, one `key = value` line each.
    std::string canonical_text() const;
    // FNV-1a 64 of the canonical text without the keys in `excluded`, as 16 hex digits.
    std::string hash(const std::vector<std::string>& excluded = {}) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace resset
