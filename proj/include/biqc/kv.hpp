#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>

// Helpers for the key=value config text stored in checkpoints.

namespace biqc::kv {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("config: missing key '" + key + "'");
    return it->second;
}

inline double get_double(const std::map<std::string, std::string>& kv, const std::string& key) {
    const std::string& s = require(kv, key);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw std::runtime_error("config: '" + key + "' is not a number: " + s);
    return v;
}

inline std::uint64_t get_uint(const std::map<std::string, std::string>& kv, const std::string& key) {
    const std::string& s = require(kv, key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw std::runtime_error("config: '" + key + "' is not an unsigned integer: " + s);
    }
    return v;
}

inline bool get_bool(const std::map<std::string, std::string>& kv, const std::string& key) {
    const std::string& s = require(kv, key);
    if (s == "true") return true;
    if (s == "false") return false;
    throw std::runtime_error("config: '" + key + "' is not a boolean: " + s);
}

}  // namespace biqc::kv
