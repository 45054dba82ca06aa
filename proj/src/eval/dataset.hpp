#pragma once
// Labeled evaluation corpora. A span dataset is a manifest CSV
// ("wav,speaker,sentence,split" header) plus one TSV of labeled sample spans
// per WAV (same path with a .tsv extension, lines "start<TAB>end<TAB>label").
// A word-pair set is a single CSV with human similarity scores. Relative
// paths resolve against the manifest's directory.

#include <string>
#include <utility>
#include <vector>

namespace coch::eval {

struct LabeledSpan {
    long start = 0, end = 0;  // sample range [start, end)
    std::string label;
};

struct Utterance {
    std::string wav_path;
    std::string speaker;
    std::string sentence;
    std::string split;  // train | dev | test
    long n_samples = 0;
    std::vector<LabeledSpan> spans;
};

struct LabeledSpanDataset {
    std::vector<Utterance> utterances;
    std::vector<const Utterance*> split(const std::string& name) const;
};

// loads, validates span bounds against each WAV's length, and checks that
// the test split shares no speaker or sentence id with train/dev
LabeledSpanDataset load_span_dataset(const std::string& manifest_csv);

struct WordPair {
    std::string word_a, word_b;
    double score = 0.0;  // human similarity in [0, 10]
    std::string wav_a, wav_b;
    std::string subset;  // natural | synthetic
};

struct WordPairSet {
    std::vector<WordPair> pairs;
    std::vector<const WordPair*> subset(const std::string& name) const;
};

// CSV with header "word_a,word_b,score,wav_a,wav_b,subset"; needs >= 2 rows
WordPairSet load_word_pairs(const std::string& csv_path);

// analysis frame f covers the window starting at sample f*80; it belongs to
// the span containing that start sample (first match wins when spans overlap)
std::vector<int> frame_span_index(const std::vector<LabeledSpan>& spans, int n_frames);

// frame range [a, b) whose window starts fall inside [start_sample, end_sample)
std::pair<long, long> span_to_frames(long start_sample, long end_sample);

// most frequent span labels (by span count, ties broken lexicographically)
std::vector<std::string> top_k_labels(const std::vector<const Utterance*>& utts, int k);

}  // namespace coch::eval
