#include "eval/fold.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "util/io.hpp"

namespace coch::eval {

namespace {

// standard folding of the 61-phone inventory onto 39 classes; "-" drops
constexpr const char* kStandardFold =
    "aa aa  ae ae  ah ah  ao aa  aw aw  ax ah  ax-h ah  axr er  ay ay  b b  "
    "bcl sil  ch ch  d d  dcl sil  dh dh  dx dx  eh eh  el l  em m  en n  "
    "eng ng  epi sil  er er  ey ey  f f  g g  gcl sil  h# sil  hh hh  hv hh  "
    "ih ih  ix ih  iy iy  jh jh  k k  kcl sil  l l  m m  n n  ng ng  "
    "nx n  ow ow  oy oy  p p  pau sil  pcl sil  q -  r r  s s  sh sh  "
    "t t  tcl sil  th th  uh uh  uw uw  ux uw  v v  w w  y y  z z  zh sh";

}  // namespace

PhonemeFold PhonemeFold::from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
    PhonemeFold f;
    if (pairs.empty()) throw std::invalid_argument("phoneme fold: empty table");
    for (const auto& [src, dst] : pairs) {
        if (src.empty() || dst.empty()) throw std::invalid_argument("phoneme fold: empty label");
        if (f.map_.count(src)) throw std::invalid_argument("phoneme fold: duplicate source label \"" + src + "\"");
        f.map_[src] = dst == "-" ? std::string() : dst;
    }
    for (const auto& [src, dst] : f.map_)
        if (!dst.empty() && !std::count(f.classes_.begin(), f.classes_.end(), dst)) f.classes_.push_back(dst);
    std::sort(f.classes_.begin(), f.classes_.end());
    if (f.classes_.empty()) throw std::invalid_argument("phoneme fold: every label is dropped");
    return f;
}

PhonemeFold PhonemeFold::standard() {
    std::istringstream in(kStandardFold);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string src, dst;
    while (in >> src >> dst) pairs.emplace_back(src, dst);
    return from_pairs(pairs);
}

PhonemeFold PhonemeFold::load(const std::string& tsv_path) {
    std::istringstream in(read_file_text(tsv_path));
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
            throw std::invalid_argument(tsv_path + ":" + std::to_string(lineno) +
                                        ": expected \"src<TAB>dst\"");
        pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return from_pairs(pairs);
}

bool PhonemeFold::dropped(const std::string& label) const {
    const auto it = map_.find(label);
    if (it == map_.end()) throw std::invalid_argument("phoneme fold: unknown label \"" + label + "\"");
    return it->second.empty();
}

const std::string& PhonemeFold::collapse(const std::string& label) const {
    const auto it = map_.find(label);
    if (it == map_.end()) throw std::invalid_argument("phoneme fold: unknown label \"" + label + "\"");
    if (it->second.empty())
        throw std::invalid_argument("phoneme fold: label \"" + label + "\" is dropped, filter it first");
    return it->second;
}

int PhonemeFold::class_index(const std::string& collapsed) const {
    const auto it = std::lower_bound(classes_.begin(), classes_.end(), collapsed);
    if (it == classes_.end() || *it != collapsed)
        throw std::invalid_argument("phoneme fold: \"" + collapsed + "\" is not a fold class");
    return static_cast<int>(it - classes_.begin());
}

}  // namespace coch::eval
