#pragma once
// Self-contained labeled audio corpus generator. Produces 16 kHz WAV
// utterances made of short synthetic sound classes (tones, chirps, a noise
// band, a formant-like pulse train) separated by silence, with per-utterance
// span label TSVs, a manifest CSV, and a word-pair similarity CSV — enough
// to exercise tokenizer training, probing, purity, and sSIMI evaluation
// without any external data.

#include <cstdint>
#include <string>
#include <vector>

#include "audio/wav.hpp"

namespace coch::synth {

// the fixed class inventory, in label order
const std::vector<std::string>& corpus_classes();

// one rendered sound segment; freq_scale/gain model speaker variation
audio::Waveform render_class(const std::string& label, int n_samples, double freq_scale,
                             double gain, uint64_t seed);

struct SynthCorpusConfig {
    std::string out_dir;
    int n_train = 24;  // utterances on speakers spk00..spk05
    int n_dev = 0;     // utterances on train speakers, distinct sentences
    int n_test = 8;    // utterances on held-out speakers spk06..spk07
    uint64_t seed = 0;
    double clip_seconds = 5.0;
};

struct SynthCorpusPaths {
    std::string manifest_csv;
    std::string word_pairs_csv;
    int n_utterances = 0;
};

SynthCorpusPaths generate_corpus(const SynthCorpusConfig& cfg);

}  // namespace coch::synth
