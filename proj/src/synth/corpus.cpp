#include "synth/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <stdexcept>

#include "core/random.hpp"
#include "dsp/frontend.hpp"
#include "util/io.hpp"

namespace coch::synth {

namespace {

namespace fs = std::filesystem;
constexpr double kTau = 6.283185307179586;

void fade_edges(std::vector<float>& v, int fade) {
    const int f = std::min<int>(fade, static_cast<int>(v.size()) / 2);
    for (int i = 0; i < f; ++i) {
        const float g = 0.5f * (1.0f - std::cos(kTau * 0.5 * (i + 1) / (f + 1)));
        v[i] *= g;
        v[v.size() - 1 - i] *= g;
    }
}

std::vector<float> sine(int n, double hz, double amp) {
    std::vector<float> v(n);
    for (int i = 0; i < n; ++i) v[i] = static_cast<float>(amp * std::sin(kTau * hz * i / dsp::kSampleRate));
    return v;
}

std::vector<float> chirp(int n, double f0, double f1, double amp) {
    std::vector<float> v(n);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / dsp::kSampleRate;
        const double dur = static_cast<double>(n) / dsp::kSampleRate;
        v[i] = static_cast<float>(amp * std::sin(kTau * (f0 * t + 0.5 * (f1 - f0) / dur * t * t)));
    }
    return v;
}

// random-phase sinusoid bank confined to [lo, hi] Hz
std::vector<float> noise_band(int n, double lo, double hi, double amp, RandomSource& rng) {
    std::vector<float> v(n, 0.0f);
    const int parts = 60;
    for (int p = 0; p < parts; ++p) {
        const double hz = lo + (hi - lo) * (p + 0.5) / parts;
        const double phase = kTau * (static_cast<double>(rng.below(1u << 20)) / (1u << 20));
        for (int i = 0; i < n; ++i)
            v[i] += static_cast<float>(std::sin(kTau * hz * i / dsp::kSampleRate + phase));
    }
    float peak = 0.0f;
    for (float x : v) peak = std::max(peak, std::abs(x));
    if (peak > 0.0f)
        for (float& x : v) x *= static_cast<float>(amp) / peak;
    return v;
}

// harmonic stack on f0 with a single formant-like resonance peak
std::vector<float> pulse_train(int n, double f0, double formant_hz, double amp) {
    std::vector<float> v(n, 0.0f);
    const int harmonics = static_cast<int>(6000.0 / f0);
    for (int h = 1; h <= harmonics; ++h) {
        const double hz = f0 * h;
        const double resonance = 1.0 / (1.0 + std::pow((hz - formant_hz) / 400.0, 2.0));
        for (int i = 0; i < n; ++i)
            v[i] += static_cast<float>(resonance * std::sin(kTau * hz * i / dsp::kSampleRate));
    }
    float peak = 0.0f;
    for (float x : v) peak = std::max(peak, std::abs(x));
    if (peak > 0.0f)
        for (float& x : v) x *= static_cast<float>(amp) / peak;
    return v;
}

// fixed similarity judgments in [0, 10] over unordered class pairs:
// frequency-near tones rate high, the two chirps rate high, noise is the
// odd one out
const std::map<std::pair<std::string, std::string>, double>& similarity_table() {
    static const std::map<std::pair<std::string, std::string>, double> t = {
        {{"chirp_down", "chirp_up"}, 8.0},   {{"chirp_down", "noise_band"}, 1.5},
        {{"chirp_down", "pulse_train"}, 3.0}, {{"chirp_down", "tone_low"}, 4.0},
        {{"chirp_down", "tone_mid"}, 4.5},   {{"chirp_down", "tone_high"}, 4.0},
        {{"chirp_up", "noise_band"}, 1.5},   {{"chirp_up", "pulse_train"}, 3.0},
        {{"chirp_up", "tone_low"}, 4.0},     {{"chirp_up", "tone_mid"}, 4.5},
        {{"chirp_up", "tone_high"}, 4.0},    {{"noise_band", "pulse_train"}, 2.0},
        {{"noise_band", "tone_low"}, 1.0},   {{"noise_band", "tone_mid"}, 1.0},
        {{"noise_band", "tone_high"}, 1.5},  {{"pulse_train", "tone_low"}, 6.0},
        {{"pulse_train", "tone_mid"}, 5.0},  {{"pulse_train", "tone_high"}, 3.5},
        {{"tone_low", "tone_mid"}, 7.0},     {{"tone_low", "tone_high"}, 3.0},
        {{"tone_mid", "tone_high"}, 6.0},
    };
    return t;
}

std::string two_digits(int n) { return (n < 10 ? "0" : "") + std::to_string(n); }

}  // namespace

const std::vector<std::string>& corpus_classes() {
    static const std::vector<std::string> classes = {
        "tone_low", "tone_mid", "tone_high", "chirp_up", "chirp_down", "noise_band", "pulse_train",
    };
    return classes;
}

audio::Waveform render_class(const std::string& label, int n_samples, double freq_scale,
                             double gain, uint64_t seed) {
    if (n_samples < 32) throw std::invalid_argument("render_class: segment too short");
    if (freq_scale <= 0.0 || gain <= 0.0) throw std::invalid_argument("render_class: bad variation");
    RandomSource rng(seed);
    std::vector<float> v;
    if (label == "tone_low") {
        v = sine(n_samples, 220.0 * freq_scale, gain);
    } else if (label == "tone_mid") {
        v = sine(n_samples, 880.0 * freq_scale, gain);
    } else if (label == "tone_high") {
        v = sine(n_samples, 3000.0 * freq_scale, gain);
    } else if (label == "chirp_up") {
        v = chirp(n_samples, 400.0 * freq_scale, 2000.0 * freq_scale, gain);
    } else if (label == "chirp_down") {
        v = chirp(n_samples, 2500.0 * freq_scale, 500.0 * freq_scale, gain);
    } else if (label == "noise_band") {
        v = noise_band(n_samples, 1000.0 * freq_scale, 3000.0 * freq_scale, gain, rng);
    } else if (label == "pulse_train") {
        v = pulse_train(n_samples, 120.0 * freq_scale, 700.0 * freq_scale, gain);
    } else {
        throw std::invalid_argument("render_class: unknown class \"" + label + "\"");
    }
    fade_edges(v, dsp::kSampleRate / 100);  // 10 ms
    audio::Waveform w;
    w.sample_rate = dsp::kSampleRate;
    w.samples = std::move(v);
    return w;
}

SynthCorpusPaths generate_corpus(const SynthCorpusConfig& cfg) {
    if (cfg.out_dir.empty()) throw std::invalid_argument("corpus: out_dir required");
    if (cfg.n_train < 1 || cfg.n_test < 0 || cfg.n_dev < 0)
        throw std::invalid_argument("corpus: need at least one train utterance");
    if (cfg.clip_seconds < 1.0) throw std::invalid_argument("corpus: clips must be >= 1 s");
    fs::create_directories(cfg.out_dir);
    fs::create_directories(fs::path(cfg.out_dir) / "words");

    const int clip_samples = static_cast<int>(cfg.clip_seconds * dsp::kSampleRate);
    const auto& classes = corpus_classes();
    RandomSource rng(cfg.seed ^ 0xa5c152e9d4b61f37ull);

    // speakers: spk00..spk05 fit, spk06..spk07 held out; per-speaker timbre
    const auto speaker_freq = [](int spk) { return 0.88 + 0.035 * spk; };
    const auto speaker_gain = [](int spk) { return 0.45 + 0.05 * spk; };

    std::string manifest = "wav,speaker,sentence,split\n";
    int sentence = 0, written = 0;
    const auto emit_split = [&](const std::string& split, int count, int spk_lo, int spk_hi) {
        for (int u = 0; u < count; ++u) {
            const int spk = spk_lo + (spk_hi > spk_lo ? u % (spk_hi - spk_lo + 1) : 0);
            const std::string stem = split + "_" + two_digits(u);
            audio::Waveform wav;
            wav.sample_rate = dsp::kSampleRate;
            wav.samples.assign(clip_samples, 0.0f);
            std::string tsv;

            long cursor = static_cast<long>(rng.below(1200)) + 400;
            while (true) {
                const int seg = 4800 + static_cast<int>(rng.below(8000));  // 0.3 - 0.8 s
                if (cursor + seg > clip_samples - 400) break;
                const auto& label = classes[rng.below(classes.size())];
                const auto piece = render_class(label, seg, speaker_freq(spk), speaker_gain(spk),
                                                rng.below(std::numeric_limits<uint64_t>::max()));
                std::copy(piece.samples.begin(), piece.samples.end(), wav.samples.begin() + cursor);
                tsv += std::to_string(cursor) + "\t" + std::to_string(cursor + seg) + "\t" + label + "\n";
                cursor += seg + 800 + static_cast<long>(rng.below(2400));  // 0.05 - 0.2 s gap
            }
            if (tsv.empty()) throw std::runtime_error("corpus: generated an empty utterance");

            const std::string wav_name = stem + ".wav";
            audio::save_wav((fs::path(cfg.out_dir) / wav_name).string(), wav);
            write_file_text((fs::path(cfg.out_dir) / (stem + ".tsv")).string(), tsv);
            manifest += wav_name + ",spk" + two_digits(spk) + ",s" + std::to_string(sentence++) + "," +
                        split + "\n";
            ++written;
        }
    };
    emit_split("train", cfg.n_train, 0, 5);
    emit_split("dev", cfg.n_dev, 0, 5);
    emit_split("test", cfg.n_test, 6, 7);

    SynthCorpusPaths out;
    out.manifest_csv = (fs::path(cfg.out_dir) / "manifest.csv").string();
    write_file_text(out.manifest_csv, manifest);
    out.n_utterances = written;

    // word-pair audio: one 0.5 s rendition per class per subset; "natural"
    // uses a speaker-like timbre, "synthetic" the canonical one
    const int word_samples = dsp::kSampleRate / 2;
    for (const auto& label : classes) {
        audio::save_wav((fs::path(cfg.out_dir) / "words" / (label + "_nat.wav")).string(),
                        render_class(label, word_samples, 0.95, 0.55, cfg.seed ^ 0x11));
        audio::save_wav((fs::path(cfg.out_dir) / "words" / (label + "_syn.wav")).string(),
                        render_class(label, word_samples, 1.0, 0.5, cfg.seed ^ 0x22));
    }
    std::string pairs = "word_a,word_b,score,wav_a,wav_b,subset\n";
    for (const auto& [key, score] : similarity_table()) {
        const auto& [a, b] = key;
        pairs += a + "," + b + "," + std::to_string(score) + ",words/" + a + "_nat.wav,words/" + b +
                 "_nat.wav,natural\n";
        pairs += a + "," + b + "," + std::to_string(score) + ",words/" + a + "_syn.wav,words/" + b +
                 "_syn.wav,synthetic\n";
    }
    out.word_pairs_csv = (fs::path(cfg.out_dir) / "word_pairs.csv").string();
    write_file_text(out.word_pairs_csv, pairs);
    return out;
}

}  // namespace coch::synth
