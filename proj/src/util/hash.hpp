#pragma once
// FNV-1a 64-bit content hashing; used for input fingerprints in reports and
// for double-run determinism checks. Not cryptographic, stable by definition.

#include <cstdint>
#include <string>
#include <vector>

namespace coch {

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

template <typename T>
inline uint64_t fnv1a64(const std::vector<T>& v) {
    return fnv1a64(v.data(), v.size() * sizeof(T));
}

inline std::string hash_hex(uint64_t h) {
    static const char* d = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = d[h & 0xf];
        h >>= 4;
    }
    return s;
}

std::string file_hash_hex(const std::string& path);  // fnv1a64 over raw bytes

}  // namespace coch
