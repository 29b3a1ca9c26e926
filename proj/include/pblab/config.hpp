#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pblab {

// Flat "key = value" files with [section] headers and # comments.
// Repeated keys accumulate (used for atom lists).
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long long get_int(const std::string& section, const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;
    std::vector<std::string> get_all(const std::string& section, const std::string& key) const;

private:
    // key: "section\x1fkey"
    std::multimap<std::string, std::string> entries_;
};

// Whitespace-separated tokens of a string.
std::vector<std::string> split_tokens(const std::string& s);

} // namespace pblab
