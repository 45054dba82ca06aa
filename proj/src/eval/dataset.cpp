#include "eval/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "audio/wav.hpp"
#include "dsp/frontend.hpp"
#include "util/io.hpp"

namespace coch::eval {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::istringstream in(read_file_text(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    fs::path p(path);
    return p.is_absolute() ? p.string() : (fs::path(base_dir) / p).string();
}

long parse_long(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument(where + ": not an integer: \"" + s + "\"");
    }
}

std::vector<LabeledSpan> load_span_tsv(const std::string& path, long n_samples) {
    std::vector<LabeledSpan> spans;
    long lineno = 0;
    for (const auto& line : read_lines(path)) {
        ++lineno;
        const auto f = split_fields(line, '\t');
        const std::string where = path + ":" + std::to_string(lineno);
        if (f.size() != 3) throw std::invalid_argument(where + ": expected start<TAB>end<TAB>label");
        LabeledSpan s;
        s.start = parse_long(f[0], where);
        s.end = parse_long(f[1], where);
        s.label = f[2];
        if (s.label.empty()) throw std::invalid_argument(where + ": empty label");
        if (s.start < 0 || s.start >= s.end || s.end > n_samples)
            throw std::invalid_argument(where + ": span [" + std::to_string(s.start) + ", " +
                                        std::to_string(s.end) + ") outside utterance of " +
                                        std::to_string(n_samples) + " samples");
        spans.push_back(std::move(s));
    }
    return spans;
}

}  // namespace

std::vector<const Utterance*> LabeledSpanDataset::split(const std::string& name) const {
    std::vector<const Utterance*> out;
    for (const auto& u : utterances)
        if (u.split == name) out.push_back(&u);
    return out;
}

LabeledSpanDataset load_span_dataset(const std::string& manifest_csv) {
    const auto lines = read_lines(manifest_csv);
    if (lines.empty()) throw std::invalid_argument(manifest_csv + ": empty manifest");
    if (lines[0] != "wav,speaker,sentence,split")
        throw std::invalid_argument(manifest_csv + ": expected header \"wav,speaker,sentence,split\"");
    const std::string base = fs::path(manifest_csv).parent_path().string();

    LabeledSpanDataset ds;
    for (size_t i = 1; i < lines.size(); ++i) {
        const auto f = split_fields(lines[i], ',');
        const std::string where = manifest_csv + ":" + std::to_string(i + 1);
        if (f.size() != 4) throw std::invalid_argument(where + ": expected 4 fields");
        Utterance u;
        u.wav_path = resolve(base, f[0]);
        u.speaker = f[1];
        u.sentence = f[2];
        u.split = f[3];
        if (u.speaker.empty() || u.sentence.empty())
            throw std::invalid_argument(where + ": empty speaker or sentence id");
        if (u.split != "train" && u.split != "dev" && u.split != "test")
            throw std::invalid_argument(where + ": split must be train, dev, or test, got \"" + f[3] + "\"");
        u.n_samples = static_cast<long>(audio::load_wav(u.wav_path).size());
        u.spans = load_span_tsv(fs::path(u.wav_path).replace_extension(".tsv").string(), u.n_samples);
        ds.utterances.push_back(std::move(u));
    }
    if (ds.utterances.empty()) throw std::invalid_argument(manifest_csv + ": no utterances");

    // the held-out split must not share speakers or sentences with the rest
    std::set<std::string> fit_speakers, fit_sentences;
    for (const auto& u : ds.utterances)
        if (u.split != "test") {
            fit_speakers.insert(u.speaker);
            fit_sentences.insert(u.sentence);
        }
    for (const auto& u : ds.utterances)
        if (u.split == "test") {
            if (fit_speakers.count(u.speaker))
                throw std::invalid_argument(manifest_csv + ": speaker \"" + u.speaker +
                                            "\" appears in both test and train/dev");
            if (fit_sentences.count(u.sentence))
                throw std::invalid_argument(manifest_csv + ": sentence \"" + u.sentence +
                                            "\" appears in both test and train/dev");
        }
    return ds;
}

std::vector<const WordPair*> WordPairSet::subset(const std::string& name) const {
    std::vector<const WordPair*> out;
    for (const auto& p : pairs)
        if (p.subset == name) out.push_back(&p);
    return out;
}

WordPairSet load_word_pairs(const std::string& csv_path) {
    const auto lines = read_lines(csv_path);
    if (lines.empty()) throw std::invalid_argument(csv_path + ": empty file");
    if (lines[0] != "word_a,word_b,score,wav_a,wav_b,subset")
        throw std::invalid_argument(csv_path + ": expected header \"word_a,word_b,score,wav_a,wav_b,subset\"");
    const std::string base = fs::path(csv_path).parent_path().string();

    WordPairSet set;
    for (size_t i = 1; i < lines.size(); ++i) {
        const auto f = split_fields(lines[i], ',');
        const std::string where = csv_path + ":" + std::to_string(i + 1);
        if (f.size() != 6) throw std::invalid_argument(where + ": expected 6 fields");
        WordPair p;
        p.word_a = f[0];
        p.word_b = f[1];
        try {
            p.score = std::stod(f[2]);
        } catch (...) {
            throw std::invalid_argument(where + ": bad score \"" + f[2] + "\"");
        }
        if (p.score < 0.0 || p.score > 10.0)
            throw std::invalid_argument(where + ": score " + f[2] + " outside [0, 10]");
        p.wav_a = resolve(base, f[3]);
        p.wav_b = resolve(base, f[4]);
        p.subset = f[5];
        if (p.subset != "natural" && p.subset != "synthetic")
            throw std::invalid_argument(where + ": subset must be natural or synthetic");
        set.pairs.push_back(std::move(p));
    }
    if (set.pairs.size() < 2)
        throw std::invalid_argument(csv_path + ": need at least 2 pairs for a correlation");
    return set;
}

std::vector<int> frame_span_index(const std::vector<LabeledSpan>& spans, int n_frames) {
    std::vector<int> idx(n_frames, -1);
    for (int f = 0; f < n_frames; ++f) {
        const long t = static_cast<long>(f) * dsp::kHop;
        for (size_t s = 0; s < spans.size(); ++s)
            if (spans[s].start <= t && t < spans[s].end) {
                idx[f] = static_cast<int>(s);
                break;
            }
    }
    return idx;
}

std::pair<long, long> span_to_frames(long start_sample, long end_sample) {
    if (start_sample < 0 || start_sample >= end_sample)
        throw std::invalid_argument("span_to_frames: bad span");
    const auto ceil_div = [](long a, long b) { return (a + b - 1) / b; };
    return {ceil_div(start_sample, dsp::kHop), ceil_div(end_sample, dsp::kHop)};
}

std::vector<std::string> top_k_labels(const std::vector<const Utterance*>& utts, int k) {
    if (k < 1) throw std::invalid_argument("top_k_labels: k must be >= 1");
    std::map<std::string, long> counts;
    for (const auto* u : utts)
        for (const auto& s : u->spans) ++counts[s.label];
    if (counts.empty()) throw std::invalid_argument("top_k_labels: no spans");
    std::vector<std::pair<std::string, long>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> out;
    for (const auto& [label, n] : order) {
        if (static_cast<int>(out.size()) == k) break;
        out.push_back(label);
    }
    return out;
}

}  // namespace coch::eval
