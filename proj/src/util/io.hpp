#pragma once
// Little-endian binary IO helpers and whole-file reads. All on-disk formats
// in this project are explicitly little-endian, fixed-width.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace coch {

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff n = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> buf(static_cast<size_t>(n));
    if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
    if (!f) throw std::runtime_error("short read: " + path);
    return buf;
}

inline void write_file_bytes(const std::string& path, const void* data, size_t n) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot create file: " + path);
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw std::runtime_error("short write: " + path);
}

inline std::string read_file_text(const std::string& path) {
    auto b = read_file_bytes(path);
    return std::string(b.begin(), b.end());
}

inline void write_file_text(const std::string& path, const std::string& text) {
    write_file_bytes(path, text.data(), text.size());
}

// raw 8-bit binary PGM (P5); pixels are row-major, row 0 at the top
inline void write_pgm(const std::string& path, int rows, int cols, const std::vector<uint8_t>& px) {
    if (rows < 1 || cols < 1 || px.size() != static_cast<size_t>(rows) * cols)
        throw std::invalid_argument("write_pgm: pixel count does not match dimensions");
    std::string header = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    std::vector<uint8_t> out(header.size() + px.size());
    std::memcpy(out.data(), header.data(), header.size());
    std::memcpy(out.data() + header.size(), px.data(), px.size());
    write_file_bytes(path, out.data(), out.size());
}

// cursor over an in-memory little-endian buffer
class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t n) : p_(data), end_(data + n) {}
    explicit ByteReader(const std::vector<uint8_t>& v) : ByteReader(v.data(), v.size()) {}
    explicit ByteReader(std::vector<uint8_t>&&) = delete;  // reader only borrows the buffer

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        if (p_ + sizeof(T) > end_) throw std::runtime_error("truncated file");
        T out;
        std::memcpy(&out, p_, sizeof(T));
        p_ += sizeof(T);
        return out;
    }
    void get_bytes(void* dst, size_t n) {
        if (p_ + n > end_) throw std::runtime_error("truncated file");
        std::memcpy(dst, p_, n);
        p_ += n;
    }
    std::string get_str(size_t n) {
        std::string s(n, '\0');
        get_bytes(s.data(), n);
        return s;
    }
    void skip(size_t n) {
        if (p_ + n > end_) throw std::runtime_error("truncated file");
        p_ += n;
    }
    size_t remaining() const { return static_cast<size_t>(end_ - p_); }

private:
    const uint8_t* p_;
    const uint8_t* end_;
};

class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const size_t off = buf_.size();
        buf_.resize(off + sizeof(T));
        std::memcpy(buf_.data() + off, &v, sizeof(T));
    }
    void put_bytes(const void* src, size_t n) {
        const size_t off = buf_.size();
        buf_.resize(off + n);
        std::memcpy(buf_.data() + off, src, n);
    }
    void put_str(const std::string& s) { put_bytes(s.data(), s.size()); }
    const std::vector<uint8_t>& bytes() const { return buf_; }
    void save(const std::string& path) const { write_file_bytes(path, buf_.data(), buf_.size()); }

private:
    std::vector<uint8_t> buf_;
};

}  // namespace coch
