#pragma once
// Token-stream file format and codebook statistics.
// CTOK: magic, u16 version, u16 bit width, u32 vocab, u32 frame rate (Hz),
// u64 count, then u16 little-endian ids.

#include <string>
#include <vector>

#include "wavcoch/model.hpp"

namespace coch::wavcoch {

void save_ctok(const std::string& path, const TokenStream& t);
TokenStream load_ctok(const std::string& path);

struct CodebookStats {
    std::vector<long> counts;   // per id
    double usage = 0.0;         // distinct ids used / vocab
    double entropy_bits = 0.0;  // empirical distribution entropy
};

CodebookStats codebook_stats(const std::vector<const TokenStream*>& streams, int bit_width);
CodebookStats codebook_stats(const TokenStream& stream);

}  // namespace coch::wavcoch
