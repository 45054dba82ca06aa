#pragma once
// Phone-label folding: collapses a fine phone inventory onto a coarser class
// set via a lookup table. The built-in table is the standard 61-phone to
// 39-class folding (closures and silences merge to "sil", the glottal stop
// is dropped); an alternative table can be loaded from TSV, one
// "src<TAB>dst" pair per line with dst "-" marking labels to drop.

#include <map>
#include <string>
#include <vector>

namespace coch::eval {

class PhonemeFold {
public:
    static PhonemeFold standard();
    static PhonemeFold load(const std::string& tsv_path);

    bool known(const std::string& label) const { return map_.count(label) > 0; }
    bool dropped(const std::string& label) const;      // throws on unknown labels
    const std::string& collapse(const std::string& label) const;  // throws on unknown or dropped
    const std::vector<std::string>& classes() const { return classes_; }  // sorted, unique
    int class_index(const std::string& collapsed) const;          // throws on unknown class

private:
    static PhonemeFold from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs);
    std::map<std::string, std::string> map_;  // "" marks a dropped label
    std::vector<std::string> classes_;
};

}  // namespace coch::eval
