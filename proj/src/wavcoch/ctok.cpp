#include "wavcoch/ctok.hpp"

#include <cmath>
#include <stdexcept>

#include "util/io.hpp"

namespace coch::wavcoch {

namespace {
constexpr std::uint16_t kCtokVersion = 1;
}

void save_ctok(const std::string& path, const TokenStream& t) {
    if (t.bit_width < 1 || t.bit_width > 16) throw std::invalid_argument("ctok: bad bit width");
    const std::uint32_t vocab = 1u << t.bit_width;
    ByteWriter w;
    w.put_str("CTOK");
    w.put<std::uint16_t>(kCtokVersion);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.bit_width));
    w.put<std::uint32_t>(vocab);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.frame_rate_hz));
    w.put<std::uint64_t>(t.ids.size());
    for (std::uint16_t id : t.ids) {
        if (id >= vocab) throw std::invalid_argument("ctok: id out of range for bit width");
        w.put<std::uint16_t>(id);
    }
    w.save(path);
}

TokenStream load_ctok(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    if (r.get_str(4) != "CTOK") throw std::runtime_error("ctok: bad magic in " + path);
    const auto ver = r.get<std::uint16_t>();
    if (ver != kCtokVersion) throw std::runtime_error("ctok: unsupported version");
    TokenStream t;
    t.bit_width = r.get<std::uint16_t>();
    if (t.bit_width < 1 || t.bit_width > 16) throw std::runtime_error("ctok: bad bit width");
    const auto vocab = r.get<std::uint32_t>();
    if (vocab != (1u << t.bit_width)) throw std::runtime_error("ctok: vocab does not match bit width");
    t.frame_rate_hz = static_cast<int>(r.get<std::uint32_t>());
    const auto n = r.get<std::uint64_t>();
    if (n > r.remaining() / 2) throw std::runtime_error("ctok: truncated token data");
    t.ids.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        t.ids[i] = r.get<std::uint16_t>();
        if (t.ids[i] >= vocab) throw std::runtime_error("ctok: id out of range");
    }
    if (r.remaining() != 0) throw std::runtime_error("ctok: trailing bytes");
    return t;
}

CodebookStats codebook_stats(const std::vector<const TokenStream*>& streams, int bit_width) {
    if (bit_width < 1 || bit_width > 16) throw std::invalid_argument("codebook_stats: bad bit width");
    const std::size_t vocab = std::size_t{1} << bit_width;
    CodebookStats s;
    s.counts.assign(vocab, 0);
    long total = 0;
    for (const TokenStream* t : streams) {
        if (t->bit_width != bit_width) throw std::invalid_argument("codebook_stats: bit width mismatch");
        for (std::uint16_t id : t->ids) {
            if (id >= vocab) throw std::invalid_argument("codebook_stats: id out of range");
            ++s.counts[id];
            ++total;
        }
    }
    long used = 0;
    double h = 0.0;
    for (long c : s.counts) {
        if (c == 0) continue;
        ++used;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    s.usage = static_cast<double>(used) / static_cast<double>(vocab);
    s.entropy_bits = total > 0 ? h : 0.0;
    return s;
}

CodebookStats codebook_stats(const TokenStream& stream) {
    return codebook_stats({&stream}, stream.bit_width);
}

}  // namespace coch::wavcoch
