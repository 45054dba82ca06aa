#include "util/hash.hpp"

#include "util/io.hpp"

namespace coch {

std::string file_hash_hex(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return hash_hex(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace coch
