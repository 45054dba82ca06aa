#pragma once
// Sonification by per-sample gradient descent: optimize a raw waveform until
// its cochleagram (or mel spectrogram) matches a target, backpropagating
// through the analysis transform itself. Adam without weight decay; the
// candidate is unconstrained during optimization and clamped to [-1,1] only
// for WAV export.

#include <cstdint>
#include <vector>

#include "audio/wav.hpp"
#include "dsp/frontend.hpp"

namespace coch::inversion {

struct InversionConfig {
    long steps = 2000;
    double lr = 1e-2;
    uint64_t seed = 0;
    double init_std = 1.0;  // candidate starts as N(0, init_std^2)
    double stop_loss = -1.0;  // stop once the loss reaches this (negative disables)
    dsp::TargetKind target = dsp::TargetKind::Cochleagram;
};

struct InversionResult {
    audio::Waveform wav;        // 16 kHz, clamped to [-1,1]
    std::vector<double> trace;  // trace[k] = loss after k updates; front() = initial
    bool aborted = false;       // non-finite loss encountered; trace ends at it
    double initial_loss() const { return trace.front(); }
    double final_loss() const { return trace.back(); }
};

// target rows must match the target kind (211 cochleagram / 80 mel); the
// candidate length is 80*cols + 960 samples, i.e. exactly 80,000 for a
// standard 988-frame clip
InversionResult invert_cochleagram(const dsp::Spectrogram& target, const InversionConfig& cfg);

}  // namespace coch::inversion
