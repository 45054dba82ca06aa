#include "audio/wav.hpp"

#include <cmath>
#include <stdexcept>

#include "util/io.hpp"

namespace coch::audio {

Waveform load_wav(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    if (r.get_str(4) != "RIFF") throw std::runtime_error(path + ": not a RIFF file");
    r.get<uint32_t>();  // riff size; trust chunk walking instead
    if (r.get_str(4) != "WAVE") throw std::runtime_error(path + ": not a WAVE file");

    int channels = 0, rate = 0, bits = 0, format = 0;
    bool have_fmt = false;
    std::vector<int16_t> pcm;
    bool have_data = false;

    while (r.remaining() >= 8) {
        const std::string id = r.get_str(4);
        const uint32_t sz = r.get<uint32_t>();
        if (sz > r.remaining()) throw std::runtime_error(path + ": truncated chunk '" + id + "'");
        if (id == "fmt ") {
            if (sz < 16) throw std::runtime_error(path + ": short fmt chunk");
            format = r.get<uint16_t>();
            channels = r.get<uint16_t>();
            rate = static_cast<int>(r.get<uint32_t>());
            r.get<uint32_t>();  // byte rate
            r.get<uint16_t>();  // block align
            bits = r.get<uint16_t>();
            r.skip(sz - 16);
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw std::runtime_error(path + ": data chunk before fmt");
            if (sz % 2 != 0) throw std::runtime_error(path + ": odd data size");
            pcm.resize(sz / 2);
            r.get_bytes(pcm.data(), sz);
            have_data = true;
        } else {
            r.skip(sz + (sz % 2));  // unknown chunk (LIST, fact, ...) with pad byte
        }
    }
    if (!have_fmt || !have_data) throw std::runtime_error(path + ": missing fmt or data chunk");
    if (format != 1 || bits != 16)
        throw std::runtime_error(path + ": only 16-bit PCM is supported (format=" +
                                 std::to_string(format) + ", bits=" + std::to_string(bits) + ")");
    if (channels < 1 || channels > 8) throw std::runtime_error(path + ": bad channel count");
    if (rate <= 0) throw std::runtime_error(path + ": bad sample rate");
    if (pcm.size() % channels != 0) throw std::runtime_error(path + ": data size not divisible by channels");

    Waveform w;
    w.sample_rate = rate;
    const size_t frames = pcm.size() / channels;
    w.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) acc += pcm[i * channels + c];
        w.samples[i] = static_cast<float>(acc / channels / 32768.0);
    }
    return w;
}

void save_wav(const std::string& path, const Waveform& w) {
    if (w.sample_rate <= 0) throw std::invalid_argument("save_wav: bad sample rate");
    ByteWriter b;
    const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
    b.put_str("RIFF");
    b.put<uint32_t>(36 + data_bytes);
    b.put_str("WAVE");
    b.put_str("fmt ");
    b.put<uint32_t>(16);
    b.put<uint16_t>(1);  // PCM
    b.put<uint16_t>(1);  // mono
    b.put<uint32_t>(static_cast<uint32_t>(w.sample_rate));
    b.put<uint32_t>(static_cast<uint32_t>(w.sample_rate) * 2);
    b.put<uint16_t>(2);
    b.put<uint16_t>(16);
    b.put_str("data");
    b.put<uint32_t>(data_bytes);
    for (float s : w.samples) {
        // quantize with the same 32768 scale the loader divides by, then
        // clamp into int16 range; keeps the roundtrip within half an lsb
        const long q = std::lround(std::min(1.0, std::max(-1.0, static_cast<double>(s))) * 32768.0);
        b.put<int16_t>(static_cast<int16_t>(std::min(32767L, std::max(-32768L, q))));
    }
    b.save(path);
}

namespace {
inline double sinc(double x) {
    if (std::fabs(x) < 1e-12) return 1.0;
    const double px = M_PI * x;
    return std::sin(px) / px;
}
}  // namespace

Waveform resample(const Waveform& w, int dst_rate) {
    if (dst_rate <= 0) throw std::invalid_argument("resample: bad target rate");
    if (w.sample_rate <= 0) throw std::invalid_argument("resample: source rate unset");
    if (w.sample_rate == dst_rate) return w;

    const double ratio = static_cast<double>(w.sample_rate) / dst_rate;  // input samples per output
    const double fc = std::min(1.0, 1.0 / ratio);  // lowpass for downsampling
    const int zero_crossings = 32;
    const double half_width = zero_crossings / fc;
    const size_t n_out = static_cast<size_t>(
        static_cast<uint64_t>(w.samples.size()) * dst_rate / w.sample_rate);

    Waveform out;
    out.sample_rate = dst_rate;
    out.samples.resize(n_out);
    const auto& x = w.samples;
    for (size_t j = 0; j < n_out; ++j) {
        const double center = j * ratio;
        const long k0 = std::max(0L, static_cast<long>(std::ceil(center - half_width)));
        const long k1 = std::min(static_cast<long>(x.size()) - 1,
                                 static_cast<long>(std::floor(center + half_width)));
        double acc = 0.0, norm = 0.0;
        for (long k = k0; k <= k1; ++k) {
            const double d = k - center;
            const double win = 0.5 * (1.0 + std::cos(M_PI * d / half_width));  // Hann taper
            const double kv = fc * sinc(fc * d) * win;
            acc += kv * x[k];
            norm += kv;
        }
        // normalizing by the in-range kernel mass keeps DC exactly flat,
        // including at the clip edges
        out.samples[j] = norm != 0.0 ? static_cast<float>(acc / norm) : 0.0f;
    }
    return out;
}

std::vector<Waveform> frame_clips(const Waveform& w, int clip_samples) {
    if (clip_samples <= 0) throw std::invalid_argument("frame_clips: bad clip length");
    std::vector<Waveform> clips;
    const size_t n = w.samples.size() / clip_samples;
    clips.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        Waveform c;
        c.sample_rate = w.sample_rate;
        c.samples.assign(w.samples.begin() + i * clip_samples,
                         w.samples.begin() + (i + 1) * clip_samples);
        clips.push_back(std::move(c));
    }
    return clips;
}

}  // namespace coch::audio
