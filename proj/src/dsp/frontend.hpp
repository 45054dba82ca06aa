#pragma once
// Fixed-kernel spectral frontend and auditory filterbanks.
//
// Pipeline: frame (window 1001, hop 80) -> Hann taper -> real DFT magnitudes
// (501 nonnegative-frequency bins at 16 kHz) -> ERB-spaced half-cosine
// filterbank (211 channels, 50 Hz..8 kHz) -> power-law compression
// (v + 1e-8)^0.3 - (1e-8)^0.3. An 80-channel triangular-mel / log1p variant
// shares the framing. Everything is built from differentiable graph
// primitives so inversion can push gradients back to the waveform; the
// DFT/filter matrices are non-grad leaves and cost nothing in backward.

#include <memory>
#include <string>
#include <vector>

#include "audio/wav.hpp"
#include "core/graph.hpp"
#include "core/tensor.hpp"

namespace coch::dsp {

constexpr int kWindow = 1001;
constexpr int kHop = 80;
constexpr int kBins = 501;      // nonnegative DFT bins for a 1001 window
constexpr int kSampleRate = 16000;
constexpr int kFrameRate = 200;  // 16000 / 80
constexpr int kErbChannels = 211;
constexpr int kMelChannels = 80;
constexpr double kErbLoHz = 50.0;
constexpr double kErbHiHz = 8000.0;
constexpr int kClipSamples = 80000;
constexpr int kClipFrames = 988;  // floor((80000-1001)/80)+1

inline int frame_count(size_t n_samples) {
    if (n_samples < kWindow) return 0;
    return static_cast<int>((n_samples - kWindow) / kHop) + 1;
}

double erb_scale(double hz);              // 21.4 * log10(0.00437*hz + 1)
double erb_center_hz(int channel);        // center of ERB channel k (0 = lowest)
double erb_response(int channel, double hz);  // half-cosine response in [0,1]
double dft_bin_hz(int bin);               // bin * 16000 / 1001

// Precomputed constant matrices; hann taper and 2/sum(hann) scaling are
// folded into the DFT kernels.
struct FrontendTables {
    TensorF dft_cos;  // [kWindow, kBins]
    TensorF dft_sin;  // [kWindow, kBins]
    TensorF erb;      // [kErbChannels, kBins], row k = channel k response
    TensorF mel;      // [kMelChannels, kBins]
    static const FrontendTables& get();
};

enum class FrontendKind { Magnitude, ComplexPair };
enum class TargetKind { Cochleagram, Mel };

inline int frontend_dim(FrontendKind k) { return k == FrontendKind::Magnitude ? kBins : 2 * kBins; }
inline int target_rows(TargetKind k) { return k == TargetKind::Cochleagram ? kErbChannels : kMelChannels; }

FrontendKind frontend_from_string(const std::string& s);
TargetKind target_from_string(const std::string& s);
std::string to_string(FrontendKind k);
std::string to_string(TargetKind k);

// ---- differentiable graph builders (x = rank-1 waveform node) ----
// spectral frames for the tokenizer encoder: [T, 501] magnitudes or
// [T, 1002] concatenated (cos, sin) projections
template <typename T>
int build_spectral_frames(Graph<T>& g, int x, FrontendKind kind);

// [T, 211] compressed ERB cochleagram
template <typename T>
int build_cochleagram(Graph<T>& g, int x);

// [T, 80] log1p mel
template <typename T>
int build_mel(Graph<T>& g, int x);

template <typename T>
int build_target(Graph<T>& g, int x, TargetKind k) {
    return k == TargetKind::Cochleagram ? build_cochleagram(g, x) : build_mel(g, x);
}

// ---- value-level API ----
// [rows, T] row-major, row 0 = lowest channel, one column per 5 ms frame
struct Spectrogram {
    int rows = 0, cols = 0;
    std::vector<float> v;  // row-major [rows, cols]
    float& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    float at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

Spectrogram cochleagram(const audio::Waveform& w);      // requires 16 kHz input
Spectrogram mel_spectrogram(const audio::Waveform& w);  // requires 16 kHz input

// transpose a [T, rows] graph/value buffer into a [rows, T] spectrogram
Spectrogram from_frames_major(const std::vector<float>& tmajor, int frames, int rows);

// ---- file formats ----
void save_cgrm(const std::string& path, const Spectrogram& s);
Spectrogram load_cgrm(const std::string& path);

// 8-bit PGM (P5), min-max normalized; image row 0 = highest channel so low
// frequencies sit at the bottom of the picture
void save_pgm(const std::string& path, const Spectrogram& s);

}  // namespace coch::dsp
