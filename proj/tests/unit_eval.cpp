#include <unistd.h>

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "audio/wav.hpp"
#include "core/random.hpp"
#include "eval/dataset.hpp"
#include "eval/fold.hpp"
#include "eval/metrics.hpp"
#include "eval/probe.hpp"
#include "util/io.hpp"

using namespace coch;
using namespace coch::eval;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("coch_eval_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// rank by definition: #smaller + (#equal + 1)/2
std::vector<double> brute_ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        long less = 0, equal = 0;
        for (size_t j = 0; j < x.size(); ++j) {
            less += x[j] < x[i];
            equal += x[j] == x[i];
        }
        r[i] = less + 0.5 * (equal + 1);
    }
    return r;
}

std::vector<double> random_vec(RandomSource& rng, int n, int distinct) {
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(rng.below(distinct));
    return v;
}

}  // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("average ranks share tied positions") {
    CHECK(average_ranks({10, 20, 20, 30}) == std::vector<double>{1.0, 2.5, 2.5, 4.0});
    CHECK(average_ranks({3, 1, 2}) == std::vector<double>{3.0, 1.0, 2.0});
    CHECK(average_ranks({5, 5, 5}) == std::vector<double>{2.0, 2.0, 2.0});

    RandomSource rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto x = random_vec(rng, 3 + static_cast<int>(rng.below(10)), 4);
        CHECK(average_ranks(x) == brute_ranks(x));
    }
}

TEST_CASE("spearman equals the rank-difference formula on tie-free data") {
    // hand oracle: x=[1,2,3], y=[3,1,2], d=[-2,1,1], 1 - 6*6/(3*8) = -0.5
    CHECK(spearman({1, 2, 3}, {3, 1, 2}) == doctest::Approx(-0.5).epsilon(1e-12));

    RandomSource rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 3 + static_cast<int>(rng.below(10));
        std::vector<double> x(n), y(n);
        std::iota(x.begin(), x.end(), 1.0);
        std::iota(y.begin(), y.end(), 1.0);
        // Fisher-Yates with the project RNG keeps the trial deterministic
        for (int i = n - 1; i > 0; --i) std::swap(x[i], x[rng.below(i + 1)]);
        for (int i = n - 1; i > 0; --i) std::swap(y[i], y[rng.below(i + 1)]);
        double d2 = 0.0;
        for (int i = 0; i < n; ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
        const double formula = 1.0 - 6.0 * d2 / (n * (static_cast<double>(n) * n - 1.0));
        CHECK(spearman(x, y) == doctest::Approx(formula).epsilon(1e-12));
    }
}

TEST_CASE("spearman handles ties via average ranks") {
    // x=[1,1,2]: ranks [1.5, 1.5, 3]; y=[1,2,3]: ranks [1,2,3]
    CHECK(spearman({1, 1, 2}, {1, 2, 3}) ==
          doctest::Approx(pearson({1.5, 1.5, 3.0}, {1, 2, 3})).epsilon(1e-12));

    RandomSource rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 4 + static_cast<int>(rng.below(12));
        auto x = random_vec(rng, n, 4);
        auto y = random_vec(rng, n, 4);
        const auto rx = brute_ranks(x), ry = brute_ranks(y);
        const bool defined = rx != std::vector<double>(n, rx[0]) && ry != std::vector<double>(n, ry[0]);
        if (!defined) {
            CHECK_THROWS_AS(spearman(x, y), std::invalid_argument);
        } else {
            CHECK(spearman(x, y) == doctest::Approx(pearson(rx, ry)).epsilon(1e-12));
        }
    }
}

TEST_CASE("spearman invariances and failure modes") {
    const std::vector<double> x{0.3, 1.7, 0.9, 4.2, 2.8};
    CHECK(spearman(x, x) == doctest::Approx(1.0));
    auto neg = x;
    for (auto& v : neg) v = -v;
    CHECK(spearman(x, neg) == doctest::Approx(-1.0));

    // strictly monotone transforms leave rho untouched
    std::vector<double> cube(x.size()), ex(x.size());
    const std::vector<double> y{2.0, 0.1, 3.3, 1.1, 0.7};
    for (size_t i = 0; i < x.size(); ++i) {
        cube[i] = x[i] * x[i] * x[i];
        ex[i] = std::exp(x[i]);
    }
    CHECK(spearman(cube, y) == doctest::Approx(spearman(x, y)).epsilon(1e-12));
    CHECK(spearman(ex, y) == doctest::Approx(spearman(x, y)).epsilon(1e-12));

    CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(spearman({1}, {2}), std::invalid_argument);
}

TEST_CASE("cosine distance") {
    CHECK(cosine_distance({1, 0}, {0, 1}) == doctest::Approx(1.0));
    CHECK(cosine_distance({1, 2, 3}, {2, 4, 6}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_distance({1, 0}, {-1, 0}) == doctest::Approx(2.0));
    CHECK(cosine_distance({1, 1}, {5, 5}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_distance({0, 0}, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(cosine_distance({1}, {1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(cosine_distance({}, {}), std::invalid_argument);
}

TEST_CASE("ssimi sign convention: smaller distance at higher judged similarity is positive") {
    CHECK(ssimi_score({0.1, 0.2, 0.3}, {9, 5, 1}) == doctest::Approx(100.0));
    CHECK(ssimi_score({0.3, 0.2, 0.1}, {9, 5, 1}) == doctest::Approx(-100.0));
    CHECK(ssimi_score({1, 2, 3}, {3, 1, 2}) == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("accuracy variants") {
    // labels [a,a,a,b] predicted all a: weighted 0.75, balanced 0.5
    const std::vector<int> labels{0, 0, 0, 1}, preds{0, 0, 0, 0};
    CHECK(plain_accuracy(preds, labels) == doctest::Approx(0.75));
    CHECK(weighted_accuracy(preds, labels) == doctest::Approx(0.75));
    CHECK(balanced_accuracy(preds, labels) == doctest::Approx(0.5));

    CHECK(weighted_accuracy({2, 1, 0}, {2, 1, 0}) == doctest::Approx(1.0));
    CHECK(balanced_accuracy({2, 1, 0}, {2, 1, 0}) == doctest::Approx(1.0));
    CHECK(weighted_accuracy({3, 3}, {3, 3}) == doctest::Approx(1.0));  // single class present
    CHECK(balanced_accuracy({3, 3}, {3, 3}) == doctest::Approx(1.0));

    RandomSource rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(40));
        std::vector<int> p(n), y(n);
        for (int i = 0; i < n; ++i) {
            p[i] = static_cast<int>(rng.below(5));
            y[i] = static_cast<int>(rng.below(5));
        }
        CHECK(weighted_accuracy(p, y) == doctest::Approx(plain_accuracy(p, y)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(plain_accuracy({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(plain_accuracy({1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("confusion matrix") {
    const auto m = confusion_matrix({0, 1, 2, 1}, {0, 1, 2, 0}, 3);
    CHECK(m == std::vector<long>{1, 1, 0, 0, 1, 0, 0, 0, 1});  // (true 0 -> pred 1) once
    CHECK(std::accumulate(m.begin(), m.end(), 0L) == 4);

    // perfect predictions give a diagonal with row sums = support
    const std::vector<int> y{0, 0, 1, 2, 2, 2};
    const auto d = confusion_matrix(y, y, 3);
    CHECK(d == std::vector<long>{2, 0, 0, 0, 1, 0, 0, 0, 3});

    CHECK_THROWS_AS(confusion_matrix({3}, {0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(confusion_matrix({0}, {0}, 0), std::invalid_argument);

    TempDir tmp;
    for (bool log_scale : {false, true}) {
        const auto path = tmp.file(log_scale ? "log.pgm" : "lin.pgm");
        save_confusion_pgm(path, d, 3, log_scale);
        const auto bytes = read_file_bytes(path);
        const std::string head(bytes.begin(), bytes.begin() + 9);
        CHECK(head == "P5\n3 3\n25");
        CHECK(bytes.size() == 11 + 9);  // "P5\n3 3\n255\n" + 9 pixels
        CHECK(bytes.back() == 255);     // the largest count maps to white
    }
}

TEST_CASE("token purity matches brute-force counting") {
    // id always under one label
    CHECK(token_purity({5, 5, 5, 5}, {2, 2, 2, 2}, 8, 3).per_id[5] == doctest::Approx(1.0));
    // counts {a:3, b:1}
    CHECK(token_purity({1, 1, 1, 1}, {0, 0, 0, 1}, 2, 2).per_id[1] == doctest::Approx(0.75));
    // uniform over 39 labels
    {
        std::vector<int> ids(39, 0), labels(39);
        std::iota(labels.begin(), labels.end(), 0);
        const auto r = token_purity(ids, labels, 1, 39);
        CHECK(r.per_id[0] == doctest::Approx(1.0 / 39));
        CHECK(r.mean == doctest::Approx(1.0 / 39));
    }

    RandomSource rng(23);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(200));
        const int vocab = 1 + static_cast<int>(rng.below(16));
        const int k = 1 + static_cast<int>(rng.below(6));
        std::vector<int> ids(n), labels(n);
        for (int i = 0; i < n; ++i) {
            ids[i] = static_cast<int>(rng.below(vocab));
            labels[i] = static_cast<int>(rng.below(k));
        }
        const auto r = token_purity(ids, labels, vocab, k);

        // oracle: group labels per id, purity = max multiplicity / group size
        std::map<int, std::vector<int>> groups;
        for (int i = 0; i < n; ++i) groups[ids[i]].push_back(labels[i]);
        double weighted = 0.0;
        for (const auto& [id, g] : groups) {
            std::map<int, long> mult;
            for (int l : g) ++mult[l];
            long best = 0;
            for (const auto& [l, c] : mult) best = std::max(best, c);
            const double purity = static_cast<double>(best) / g.size();
            CHECK(r.per_id[id] == doctest::Approx(purity).epsilon(1e-12));
            CHECK(r.counts[id] == static_cast<long>(g.size()));
            weighted += purity * g.size();
        }
        CHECK(r.mean == doctest::Approx(weighted / n).epsilon(1e-12));
        CHECK(r.mean >= 1.0 / k - 1e-12);
        CHECK(r.mean <= 1.0 + 1e-12);
    }

    CHECK_THROWS_AS(token_purity({}, {}, 4, 2), std::invalid_argument);
    CHECK_THROWS_AS(token_purity({4}, {0}, 4, 2), std::invalid_argument);
    CHECK_THROWS_AS(token_purity({0}, {2}, 4, 2), std::invalid_argument);
}

TEST_CASE("phone folding: standard table") {
    const auto fold = PhonemeFold::standard();
    CHECK(fold.classes().size() == 39);
    CHECK(fold.collapse("ix") == "ih");
    CHECK(fold.collapse("sh") == "sh");
    CHECK(fold.collapse("zh") == "sh");
    CHECK(fold.collapse("ao") == "aa");
    CHECK(fold.collapse("axr") == "er");
    for (const char* closure : {"pcl", "tcl", "kcl", "bcl", "dcl", "gcl", "h#", "pau", "epi"})
        CHECK(fold.collapse(closure) == "sil");
    CHECK(fold.dropped("q"));
    CHECK(!fold.dropped("s"));
    CHECK(fold.known("em"));
    CHECK(!fold.known("xyz"));
    CHECK_THROWS_WITH_AS(fold.collapse("xyz"), doctest::Contains("xyz"), std::invalid_argument);
    CHECK_THROWS_AS(fold.collapse("q"), std::invalid_argument);
    CHECK_THROWS_AS(fold.dropped("nope"), std::invalid_argument);

    CHECK(std::is_sorted(fold.classes().begin(), fold.classes().end()));
    CHECK(fold.class_index("aa") == 0);
    CHECK(fold.classes()[fold.class_index("sil")] == "sil");
    CHECK_THROWS_AS(fold.class_index("ix"), std::invalid_argument);  // folds away, not a class
}

TEST_CASE("phone folding: shipped table matches the built-in") {
    const auto shipped = PhonemeFold::load(std::string(COCH_DATA_DIR) + "/phoneme_fold_61to39.tsv");
    const auto builtin = PhonemeFold::standard();
    CHECK(shipped.classes() == builtin.classes());
    for (const char* p : {"aa", "ao", "ax-h", "ix", "zh", "h#", "en", "ux", "nx", "hv"})
        CHECK(shipped.collapse(p) == builtin.collapse(p));
    CHECK(shipped.dropped("q"));
}

TEST_CASE("phone folding: custom tables and malformed input") {
    TempDir tmp;
    const auto path = tmp.file("fold.tsv");
    write_file_text(path, "x\ta\ny\ta\nz\t-\n");
    const auto fold = PhonemeFold::load(path);
    CHECK(fold.classes() == std::vector<std::string>{"a"});
    CHECK(fold.collapse("y") == "a");
    CHECK(fold.dropped("z"));

    write_file_text(path, "x a\n");
    CHECK_THROWS_AS(PhonemeFold::load(path), std::invalid_argument);  // no tab
    write_file_text(path, "x\ta\nx\tb\n");
    CHECK_THROWS_AS(PhonemeFold::load(path), std::invalid_argument);  // duplicate src
    write_file_text(path, "x\t-\n");
    CHECK_THROWS_AS(PhonemeFold::load(path), std::invalid_argument);  // everything dropped
    write_file_text(path, "");
    CHECK_THROWS_AS(PhonemeFold::load(path), std::invalid_argument);
}

namespace {

void write_corpus_wav(const std::string& path, int n_samples, uint64_t seed) {
    audio::Waveform w;
    w.sample_rate = 16000;
    w.samples.resize(n_samples);
    RandomSource rng(seed);
    std::vector<float> noise(n_samples);
    rng.fill_normal(noise, 0.0, 0.1);
    w.samples = noise;
    audio::save_wav(path, w);
}

}  // namespace

TEST_CASE("span dataset loads and validates") {
    TempDir tmp;
    write_corpus_wav(tmp.file("a.wav"), 1000, 1);
    write_corpus_wav(tmp.file("b.wav"), 800, 2);
    write_file_text(tmp.file("a.tsv"), "0\t400\tda\n400\t1000\tba\n");
    write_file_text(tmp.file("b.tsv"), "100\t800\tda\n");
    const std::string manifest = tmp.file("manifest.csv");
    write_file_text(manifest,
                    "wav,speaker,sentence,split\n"
                    "a.wav,spk0,s0,train\n"
                    "b.wav,spk1,s1,test\n");

    const auto ds = load_span_dataset(manifest);
    REQUIRE(ds.utterances.size() == 2);
    CHECK(ds.utterances[0].n_samples == 1000);
    CHECK(ds.utterances[0].spans.size() == 2);
    CHECK(ds.utterances[0].spans[1].label == "ba");
    CHECK(ds.utterances[1].split == "test");
    CHECK(ds.split("train").size() == 1);
    CHECK(ds.split("test").size() == 1);
    CHECK(ds.split("dev").empty());

    SUBCASE("span outside the utterance is rejected") {
        write_file_text(tmp.file("b.tsv"), "100\t900\tda\n");  // 900 > 800 samples
        CHECK_THROWS_WITH_AS(load_span_dataset(manifest), doctest::Contains("outside"),
                             std::invalid_argument);
    }
    SUBCASE("inverted span is rejected") {
        write_file_text(tmp.file("b.tsv"), "500\t500\tda\n");
        CHECK_THROWS_AS(load_span_dataset(manifest), std::invalid_argument);
    }
    SUBCASE("shared speaker across test and train is rejected") {
        write_file_text(manifest,
                        "wav,speaker,sentence,split\n"
                        "a.wav,spk0,s0,train\n"
                        "b.wav,spk0,s1,test\n");
        CHECK_THROWS_WITH_AS(load_span_dataset(manifest), doctest::Contains("spk0"),
                             std::invalid_argument);
    }
    SUBCASE("shared sentence across test and dev is rejected") {
        write_file_text(manifest,
                        "wav,speaker,sentence,split\n"
                        "a.wav,spk0,s0,dev\n"
                        "b.wav,spk1,s0,test\n");
        CHECK_THROWS_WITH_AS(load_span_dataset(manifest), doctest::Contains("s0"),
                             std::invalid_argument);
    }
    SUBCASE("unknown split name is rejected") {
        write_file_text(manifest,
                        "wav,speaker,sentence,split\n"
                        "a.wav,spk0,s0,validation\n");
        CHECK_THROWS_AS(load_span_dataset(manifest), std::invalid_argument);
    }
    SUBCASE("wrong header is rejected") {
        write_file_text(manifest, "wav,spk,sentence,split\na.wav,spk0,s0,train\n");
        CHECK_THROWS_AS(load_span_dataset(manifest), std::invalid_argument);
    }
    SUBCASE("missing span file is an error") {
        std::filesystem::remove(tmp.file("b.tsv"));
        CHECK_THROWS(load_span_dataset(manifest));
    }
}

TEST_CASE("top-k labels order by span count then name") {
    TempDir tmp;
    write_corpus_wav(tmp.file("a.wav"), 1000, 3);
    write_file_text(tmp.file("a.tsv"), "0\t100\tx\n100\t200\ty\n200\t300\ty\n300\t400\tz\n400\t500\tz\n");
    write_file_text(tmp.file("m.csv"), "wav,speaker,sentence,split\na.wav,spk0,s0,train\n");
    const auto ds = load_span_dataset(tmp.file("m.csv"));
    const auto train = ds.split("train");
    CHECK(top_k_labels(train, 2) == std::vector<std::string>{"y", "z"});  // 2,2 then x:1
    CHECK(top_k_labels(train, 10) == std::vector<std::string>{"y", "z", "x"});
    CHECK_THROWS_AS(top_k_labels(train, 0), std::invalid_argument);
}

TEST_CASE("word pairs load and validate") {
    TempDir tmp;
    const auto path = tmp.file("pairs.csv");
    const std::string header = "word_a,word_b,score,wav_a,wav_b,subset\n";
    write_file_text(path, header + "water,river,7.5,w1.wav,w2.wav,natural\nsun,moon,4,w3.wav,w4.wav,synthetic\n");
    const auto set = load_word_pairs(path);
    REQUIRE(set.pairs.size() == 2);
    CHECK(set.pairs[0].score == doctest::Approx(7.5));
    CHECK(set.pairs[0].wav_a == tmp.file("w1.wav"));
    CHECK(set.subset("natural").size() == 1);
    CHECK(set.subset("synthetic").size() == 1);

    write_file_text(path, header + "a,b,10.5,x.wav,y.wav,natural\nc,d,2,e.wav,f.wav,natural\n");
    CHECK_THROWS_WITH_AS(load_word_pairs(path), doctest::Contains("[0, 10]"), std::invalid_argument);
    write_file_text(path, header + "a,b,5,x.wav,y.wav,librispeech\nc,d,2,e.wav,f.wav,natural\n");
    CHECK_THROWS_AS(load_word_pairs(path), std::invalid_argument);
    write_file_text(path, header + "a,b,5,x.wav,y.wav,natural\n");
    CHECK_THROWS_WITH_AS(load_word_pairs(path), doctest::Contains("at least 2"), std::invalid_argument);
    write_file_text(path, "words,scores\n");
    CHECK_THROWS_AS(load_word_pairs(path), std::invalid_argument);
}

TEST_CASE("frame alignment by window start sample") {
    const std::vector<LabeledSpan> spans{{0, 100, "a"}, {100, 240, "b"}, {400, 480, "c"}};
    // frame starts: 0, 80, 160, 240, 320, 400, 480
    CHECK(frame_span_index(spans, 7) == std::vector<int>{0, 0, 1, -1, -1, 2, -1});

    // span_to_frames agrees with the per-frame rule
    for (const auto& s : spans) {
        const auto [a, b] = span_to_frames(s.start, s.end);
        const auto idx = frame_span_index({s}, 7);
        for (long f = 0; f < 7; ++f) CHECK((idx[f] == 0) == (f >= a && f < b));
    }

    // spans shorter than a hop can cover no window start
    const auto [a, b] = span_to_frames(81, 159);
    CHECK(a == b);
    CHECK(frame_span_index({{81, 159, "x"}}, 4) == std::vector<int>{-1, -1, -1, -1});

    // random non-overlapping spans: both alignment paths agree everywhere
    RandomSource rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<LabeledSpan> sp;
        long cursor = 0;
        while (sp.size() < 5) {
            const long start = cursor + static_cast<long>(rng.below(120));
            const long end = start + 1 + static_cast<long>(rng.below(300));
            sp.push_back({start, end, "s" + std::to_string(sp.size())});
            cursor = end;
        }
        const int n_frames = static_cast<int>(cursor / 80 + 2);
        const auto idx = frame_span_index(sp, n_frames);
        for (size_t s = 0; s < sp.size(); ++s) {
            const auto [fa, fb] = span_to_frames(sp[s].start, sp[s].end);
            for (long f = 0; f < n_frames; ++f)
                CHECK((idx[f] == static_cast<int>(s)) == (f >= fa && f < fb));
        }
    }
    CHECK_THROWS_AS(span_to_frames(5, 5), std::invalid_argument);
    CHECK_THROWS_AS(span_to_frames(-1, 5), std::invalid_argument);
}

namespace {

// deterministic gaussian blobs around per-class centers
void make_blobs(int n_per, int d, int k, double spread, uint64_t seed, TensorF& x, std::vector<int>& y) {
    RandomSource rng(seed);
    x = TensorF({n_per * k, d});
    y.assign(static_cast<size_t>(n_per) * k, 0);
    std::vector<float> noise(static_cast<size_t>(n_per) * k * d);
    rng.fill_normal(noise, 0.0, spread);
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < n_per; ++i) {
            const long row = static_cast<long>(c) * n_per + i;
            y[row] = c;
            for (int j = 0; j < d; ++j)
                x.v[row * d + j] = noise[row * d + j] + (j == c % d ? 4.0f * (1 + c / d) : 0.0f);
        }
}

std::vector<std::string> class_names(int k) {
    std::vector<std::string> names(k);
    for (int i = 0; i < k; ++i) names[i] = "c" + std::to_string(i);
    return names;
}

}  // namespace

TEST_CASE("probe separates gaussian blobs") {
    TensorF x;
    std::vector<int> y;
    make_blobs(20, 2, 3, 0.3, 41, x, y);
    ProbeConfig cfg;
    const auto m = train_linear_probe(x, y, class_names(3), cfg);
    CHECK(plain_accuracy(probe_predict(m, x), y) == doctest::Approx(1.0));
    CHECK(m.iters <= cfg.max_iters);
    for (float v : m.w.v) CHECK(std::isfinite(v));
}

TEST_CASE("extreme l2 shrinks weights to zero and predictions to the majority class") {
    TensorF x;
    std::vector<int> y;
    make_blobs(10, 3, 3, 0.5, 43, x, y);
    y[0] = y[1] = 2;  // tilt the priors toward class 2
    ProbeConfig cfg;
    cfg.l2_strength = 1e6;
    cfg.max_iters = 2000;
    const auto m = train_linear_probe(x, y, class_names(3), cfg);
    for (float v : m.w.v) CHECK(std::abs(v) < 1e-3);
    const auto preds = probe_predict(m, x);
    for (int p : preds) CHECK(p == 2);
}

TEST_CASE("probe objective is convex: random restarts meet") {
    RandomSource rng(47);
    TensorF x({100, 6});
    std::vector<int> y(100);
    std::vector<float> noise(600);
    rng.fill_normal(noise, 0.0, 1.0);
    x.v = noise;
    for (auto& v : y) v = static_cast<int>(rng.below(5));

    ProbeConfig cfg;
    cfg.l2_strength = 1e-3;
    cfg.max_iters = 4000;
    cfg.tol = 1e-10;
    cfg.init_scale = 0.5;
    cfg.seed = 1;
    const auto m1 = train_linear_probe(x, y, class_names(5), cfg);
    cfg.seed = 2;
    const auto m2 = train_linear_probe(x, y, class_names(5), cfg);
    CHECK(std::abs(m1.final_objective - m2.final_objective) < 1e-6);
}

TEST_CASE("probe CE matches an independent fixed-step descent oracle") {
    RandomSource rng(53);
    const int n = 100, d = 6, k = 5;
    TensorF x({n, d});
    std::vector<int> y(n);
    std::vector<float> noise(static_cast<size_t>(n) * d);
    rng.fill_normal(noise, 0.0, 1.0);
    x.v = noise;
    for (auto& v : y) v = static_cast<int>(rng.below(k));

    ProbeConfig cfg;
    cfg.l2_strength = 1e-3;
    cfg.max_iters = 5000;
    cfg.tol = 1e-10;
    const auto m = train_linear_probe(x, y, class_names(k), cfg);
    const double probe_train_ce = probe_ce(m, x, y);

    // oracle: plain gradient descent, small fixed step, run long, using the
    // same standardization the model stored
    std::vector<double> xs(static_cast<size_t>(n) * d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            xs[static_cast<size_t>(i) * d + j] = (x.v[static_cast<size_t>(i) * d + j] - m.mu[j]) / m.sigma[j];
    std::vector<double> w(static_cast<size_t>(d) * k, 0.0), b(k, 0.0);
    std::vector<double> z(k);
    for (int iter = 0; iter < 20000; ++iter) {
        std::vector<double> gw(w.size(), 0.0), gb(k, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < k; ++c) {
                double s = b[c];
                for (int j = 0; j < d; ++j) s += xs[static_cast<size_t>(i) * d + j] * w[static_cast<size_t>(j) * k + c];
                z[c] = s;
            }
            const double zm = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            for (int c = 0; c < k; ++c) sum += std::exp(z[c] - zm);
            for (int c = 0; c < k; ++c) {
                const double r = std::exp(z[c] - zm) / sum - (c == y[i] ? 1.0 : 0.0);
                gb[c] += r / n;
                for (int j = 0; j < d; ++j) gw[static_cast<size_t>(j) * k + c] += xs[static_cast<size_t>(i) * d + j] * r / n;
            }
        }
        for (size_t i = 0; i < w.size(); ++i) w[i] -= 0.5 * (gw[i] + cfg.l2_strength * w[i]);
        for (int c = 0; c < k; ++c) b[c] -= 0.5 * gb[c];
    }
    double oracle_ce = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) {
            double s = b[c];
            for (int j = 0; j < d; ++j) s += xs[static_cast<size_t>(i) * d + j] * w[static_cast<size_t>(j) * k + c];
            z[c] = s;
        }
        const double zm = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (int c = 0; c < k; ++c) sum += std::exp(z[c] - zm);
        oracle_ce += -(z[y[i]] - zm - std::log(sum));
    }
    oracle_ce /= n;
    CHECK(std::abs(probe_train_ce - oracle_ce) < 1e-3);
}

TEST_CASE("probe input validation") {
    TensorF x({4, 2});
    x.v = {0, 1, 1, 0, 0, 2, 2, 0};
    ProbeConfig cfg;
    CHECK_THROWS_AS(train_linear_probe(x, {0, 0, 0, 0}, class_names(2), cfg), std::invalid_argument);
    CHECK_THROWS_AS(train_linear_probe(x, {0, 1, 0}, class_names(2), cfg), std::invalid_argument);
    CHECK_THROWS_AS(train_linear_probe(x, {0, 1, 0, 2}, class_names(2), cfg), std::invalid_argument);
    CHECK_THROWS_AS(train_linear_probe(x, {0, 1, 0, 1}, class_names(1), cfg), std::invalid_argument);
    TensorF tall({1, 2});
    tall.v = {0, 1};
    CHECK_THROWS_AS(train_linear_probe(tall, {0}, class_names(2), cfg), std::invalid_argument);
    TensorF bad = x;
    bad.v[1] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(train_linear_probe(bad, {0, 1, 0, 1}, class_names(2), cfg), std::invalid_argument);

    // constant feature columns survive standardization
    TensorF cx({4, 2});
    cx.v = {1, 5, 1, 5, 3, 5, 3, 5};  // second column constant
    const auto m = train_linear_probe(cx, {0, 0, 1, 1}, class_names(2), cfg);
    CHECK(plain_accuracy(probe_predict(m, cx), {0, 0, 1, 1}) == doctest::Approx(1.0));

    CHECK_THROWS_AS(probe_ce(m, x, {0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(probe_ce(m, cx, {0, 1, 0, 2}), std::invalid_argument);
    TensorF wrong_d({2, 3});
    CHECK_THROWS_AS(probe_predict(m, wrong_d), std::invalid_argument);
}

TEST_CASE("layer/pooling selection tie rules") {
    CHECK_THROWS_AS(select_layer_pooling({}), std::invalid_argument);

    const GridCell only{4, 2, 0.1};
    const auto got = select_layer_pooling({only});
    CHECK(got.layer == 4);
    CHECK(got.pooling == 2);

    // exact tie between layers 7 and 3: lower layer wins regardless of order
    const auto tie = select_layer_pooling({{7, 0, 0.8}, {3, 1, 0.8}, {5, 0, 0.2}});
    CHECK(tie.layer == 3);
    // same layer, tied score: mean (0) beats max (1) beats min (2)
    const auto pool = select_layer_pooling({{2, 2, 0.6}, {2, 0, 0.6}, {2, 1, 0.6}});
    CHECK(pool.pooling == 0);
    // a strictly better score wins over any tie rule
    const auto best = select_layer_pooling({{0, 0, 0.5}, {9, 2, 0.7}});
    CHECK(best.layer == 9);
}

TEST_SUITE_END();
