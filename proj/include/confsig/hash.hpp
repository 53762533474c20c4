#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "confsig/error.hpp"

namespace confsig {

// 64-bit FNV-1a. Used for content-addressed cache keys and manifest
// integrity hashes; not cryptographic.
inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf, 16);
}

inline std::string content_hash(std::string_view data) { return hex64(fnv1a64(data)); }

inline std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file for hashing: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return content_hash(ss.str());
}

}  // namespace confsig
