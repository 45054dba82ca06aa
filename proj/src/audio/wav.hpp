#pragma once
// PCM16 WAV reading/writing and waveform utilities. Only 16-bit PCM is
// accepted; stereo is averaged down to mono on load. Samples live in
// [-1, 1] floats (int16 / 32768).

#include <cstdint>
#include <string>
#include <vector>

namespace coch::audio {

struct Waveform {
    std::vector<float> samples;
    int sample_rate = 0;

    size_t size() const { return samples.size(); }
    double seconds() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

Waveform load_wav(const std::string& path);
void save_wav(const std::string& path, const Waveform& w);  // clamps to [-1,1]

// windowed-sinc resampling; returns the input untouched when rates match
Waveform resample(const Waveform& w, int dst_rate);

// consecutive fixed-length clips; the trailing partial clip is dropped
std::vector<Waveform> frame_clips(const Waveform& w, int clip_samples = 80000);

}  // namespace coch::audio
