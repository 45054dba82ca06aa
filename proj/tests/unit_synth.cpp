#include <unistd.h>

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "audio/wav.hpp"
#include "eval/dataset.hpp"
#include "synth/corpus.hpp"
#include "util/io.hpp"

using namespace coch;
using namespace coch::synth;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("coch_synth_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string dir(const std::string& name) const { return (path / name).string(); }
};

double rms(const std::vector<float>& v, long a, long b) {
    double s = 0.0;
    for (long i = a; i < b; ++i) s += static_cast<double>(v[i]) * v[i];
    return std::sqrt(s / (b - a));
}

}  // namespace

TEST_SUITE_BEGIN("synth");

TEST_CASE("class renderer covers the inventory and validates") {
    for (const auto& label : corpus_classes()) {
        const auto w = render_class(label, 8000, 1.0, 0.5, 7);
        CHECK(w.sample_rate == 16000);
        CHECK(w.samples.size() == 8000);
        CHECK(rms(w.samples, 0, 8000) > 0.05);
        float peak = 0.0f;
        for (float x : w.samples) peak = std::max(peak, std::abs(x));
        CHECK(peak <= 0.9f);
        // faded edges: the first sample is (near) zero
        CHECK(std::abs(w.samples.front()) < 0.05f);
        CHECK(std::abs(w.samples.back()) < 0.05f);
    }
    CHECK_THROWS_AS(render_class("vowel", 8000, 1.0, 0.5, 7), std::invalid_argument);
    CHECK_THROWS_AS(render_class("tone_low", 8, 1.0, 0.5, 7), std::invalid_argument);
    CHECK_THROWS_AS(render_class("tone_low", 8000, 0.0, 0.5, 7), std::invalid_argument);
}

TEST_CASE("generated corpus loads as a valid span dataset") {
    TempDir tmp;
    SynthCorpusConfig cfg;
    cfg.out_dir = tmp.dir("corpus");
    cfg.n_train = 6;
    cfg.n_dev = 2;
    cfg.n_test = 3;
    cfg.seed = 42;
    const auto paths = generate_corpus(cfg);
    CHECK(paths.n_utterances == 11);

    const auto ds = eval::load_span_dataset(paths.manifest_csv);
    CHECK(ds.utterances.size() == 11);
    CHECK(ds.split("train").size() == 6);
    CHECK(ds.split("dev").size() == 2);
    CHECK(ds.split("test").size() == 3);

    std::set<std::string> train_speakers, test_speakers, labels;
    for (const auto& u : ds.utterances) {
        CHECK(u.n_samples == 80000);
        CHECK(!u.spans.empty());
        long prev_end = -1;
        for (const auto& s : u.spans) {
            CHECK(s.start > prev_end);  // spans are ordered and separated
            prev_end = s.end;
            labels.insert(s.label);
        }
        (u.split == "test" ? test_speakers : train_speakers).insert(u.speaker);
    }
    for (const auto& spk : test_speakers) CHECK(!train_speakers.count(spk));
    for (const auto& l : labels)
        CHECK(std::count(corpus_classes().begin(), corpus_classes().end(), l) == 1);
    CHECK(labels.size() >= 5);  // 11 utterances hit most of the 7 classes

    // labeled segments are loud, gaps are silent
    const auto& u0 = ds.utterances[0];
    const auto wav = audio::load_wav(u0.wav_path);
    for (const auto& s : u0.spans) {
        const long mid = (s.start + s.end) / 2;
        CHECK(rms(wav.samples, s.start, mid) > 0.05);
    }
    CHECK(rms(wav.samples, 0, u0.spans[0].start) < 1e-4);

    const auto pairs = eval::load_word_pairs(paths.word_pairs_csv);
    CHECK(pairs.pairs.size() == 42);
    CHECK(pairs.subset("natural").size() == 21);
    CHECK(pairs.subset("synthetic").size() == 21);
    for (const auto& p : pairs.pairs) {
        CHECK(audio::load_wav(p.wav_a).size() == 8000);
        CHECK(audio::load_wav(p.wav_b).size() == 8000);
    }
}

TEST_CASE("generation is deterministic in the seed") {
    TempDir tmp;
    SynthCorpusConfig cfg;
    cfg.n_train = 2;
    cfg.n_test = 1;
    cfg.seed = 9;
    cfg.out_dir = tmp.dir("a");
    const auto a = generate_corpus(cfg);
    cfg.out_dir = tmp.dir("b");
    const auto b = generate_corpus(cfg);

    CHECK(read_file_text(a.manifest_csv) == read_file_text(b.manifest_csv));
    CHECK(read_file_bytes(tmp.dir("a") + "/train_00.wav") == read_file_bytes(tmp.dir("b") + "/train_00.wav"));
    CHECK(read_file_text(tmp.dir("a") + "/train_01.tsv") == read_file_text(tmp.dir("b") + "/train_01.tsv"));

    cfg.out_dir = tmp.dir("c");
    cfg.seed = 10;
    const auto c = generate_corpus(cfg);
    CHECK(read_file_bytes(tmp.dir("a") + "/train_00.wav") != read_file_bytes(tmp.dir("c") + "/train_00.wav"));
}

TEST_CASE("corpus config validation") {
    SynthCorpusConfig cfg;
    cfg.out_dir = "";
    CHECK_THROWS_AS(generate_corpus(cfg), std::invalid_argument);
    TempDir tmp;
    cfg.out_dir = tmp.dir("x");
    cfg.n_train = 0;
    CHECK_THROWS_AS(generate_corpus(cfg), std::invalid_argument);
    cfg.n_train = 1;
    cfg.clip_seconds = 0.2;
    CHECK_THROWS_AS(generate_corpus(cfg), std::invalid_argument);
}

TEST_SUITE_END();
