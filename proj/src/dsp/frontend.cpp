#include "dsp/frontend.hpp"

#include <cmath>
#include <stdexcept>

#include "util/io.hpp"

namespace coch::dsp {

double erb_scale(double hz) { return 21.4 * std::log10(0.00437 * hz + 1.0); }

namespace {
double erb_step() {
    return (erb_scale(kErbHiHz) - erb_scale(kErbLoHz)) / (kErbChannels + 1);
}
double erb_center(int channel) {
    return erb_scale(kErbLoHz) + (channel + 1) * erb_step();
}
double mel_scale(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }
}  // namespace

double erb_center_hz(int channel) {
    const double e = erb_center(channel);
    return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437;
}

double erb_response(int channel, double hz) {
    const double d = erb_scale(hz) - erb_center(channel);
    const double step = erb_step();
    if (std::fabs(d) > step) return 0.0;
    return std::cos(M_PI * d / (2.0 * step));
}

double dft_bin_hz(int bin) { return static_cast<double>(bin) * kSampleRate / kWindow; }

FrontendKind frontend_from_string(const std::string& s) {
    if (s == "magnitude") return FrontendKind::Magnitude;
    if (s == "complex") return FrontendKind::ComplexPair;
    throw std::invalid_argument("unknown frontend kind: " + s);
}
TargetKind target_from_string(const std::string& s) {
    if (s == "cochleagram") return TargetKind::Cochleagram;
    if (s == "mel") return TargetKind::Mel;
    throw std::invalid_argument("unknown target kind: " + s);
}
std::string to_string(FrontendKind k) { return k == FrontendKind::Magnitude ? "magnitude" : "complex"; }
std::string to_string(TargetKind k) { return k == TargetKind::Cochleagram ? "cochleagram" : "mel"; }

const FrontendTables& FrontendTables::get() {
    static const FrontendTables* tables = [] {
        auto* t = new FrontendTables;
        // symmetric Hann taper, folded into the DFT kernels together with a
        // 2/sum(hann) scale so a unit-amplitude sine peaks near 1.0
        std::vector<double> hann(kWindow);
        double hsum = 0.0;
        for (int s = 0; s < kWindow; ++s) {
            hann[s] = 0.5 * (1.0 - std::cos(2.0 * M_PI * s / (kWindow - 1)));
            hsum += hann[s];
        }
        const double scale = 2.0 / hsum;
        t->dft_cos = TensorF({kWindow, kBins});
        t->dft_sin = TensorF({kWindow, kBins});
        for (int s = 0; s < kWindow; ++s) {
            for (int b = 0; b < kBins; ++b) {
                const double ang = 2.0 * M_PI * b * s / kWindow;
                const double w = hann[s] * scale;
                t->dft_cos.at(s, b) = static_cast<float>(w * std::cos(ang));
                t->dft_sin.at(s, b) = static_cast<float>(w * std::sin(ang));
            }
        }
        t->erb = TensorF({kErbChannels, kBins});
        for (int k = 0; k < kErbChannels; ++k)
            for (int b = 0; b < kBins; ++b)
                t->erb.at(k, b) = static_cast<float>(erb_response(k, dft_bin_hz(b)));

        // triangular HTK-mel filters, edges equally spaced on the mel scale
        t->mel = TensorF({kMelChannels, kBins});
        const double m_lo = mel_scale(0.0), m_hi = mel_scale(kErbHiHz);
        std::vector<double> edge(kMelChannels + 2);
        for (int i = 0; i < kMelChannels + 2; ++i)
            edge[i] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (kMelChannels + 1));
        for (int k = 0; k < kMelChannels; ++k) {
            for (int b = 0; b < kBins; ++b) {
                const double f = dft_bin_hz(b);
                double r = 0.0;
                if (f >= edge[k] && f <= edge[k + 1] && edge[k + 1] > edge[k])
                    r = (f - edge[k]) / (edge[k + 1] - edge[k]);
                else if (f > edge[k + 1] && f <= edge[k + 2] && edge[k + 2] > edge[k + 1])
                    r = (edge[k + 2] - f) / (edge[k + 2] - edge[k + 1]);
                t->mel.at(k, b) = static_cast<float>(r);
            }
        }
        return t;
    }();
    return *tables;
}

namespace {
template <typename T>
Tensor<T> cast_tensor(const TensorF& src) {
    Tensor<T> out(src.shape);
    for (size_t i = 0; i < src.v.size(); ++i) out.v[i] = static_cast<T>(src.v[i]);
    return out;
}

// frames [T, win] -> (re, im) projections, each [T, kBins]
template <typename T>
std::pair<int, int> build_dft(Graph<T>& g, int x) {
    const auto& tab = FrontendTables::get();
    const int frames = g.frame_signal(x, kWindow, kHop);
    const int re = g.matmul(frames, g.leaf(cast_tensor<T>(tab.dft_cos)));
    const int im = g.matmul(frames, g.leaf(cast_tensor<T>(tab.dft_sin)));
    return {re, im};
}
}  // namespace

template <typename T>
int build_spectral_frames(Graph<T>& g, int x, FrontendKind kind) {
    auto [re, im] = build_dft(g, x);
    if (kind == FrontendKind::ComplexPair) return g.concat_cols({re, im});
    return g.magnitude(re, im);
}

template <typename T>
int build_cochleagram(Graph<T>& g, int x) {
    const auto& tab = FrontendTables::get();
    auto [re, im] = build_dft(g, x);
    const int mag = g.magnitude(re, im);
    const int wm = g.matmul_nt(mag, g.leaf(cast_tensor<T>(tab.erb)));  // [T, 211]
    // (v + 1e-8)^0.3 - (1e-8)^0.3 with the offset computed through the same
    // T-precision path, so exact silence maps to exactly zero
    const double eps_shift = 1e-8;
    const T c0 = static_cast<T>(std::pow(static_cast<double>(static_cast<T>(eps_shift)), 0.3));
    const int comp = g.pow_(g.add_const(wm, eps_shift), 0.3);
    return g.add_const(comp, -static_cast<double>(c0));
}

template <typename T>
int build_mel(Graph<T>& g, int x) {
    const auto& tab = FrontendTables::get();
    auto [re, im] = build_dft(g, x);
    const int mag = g.magnitude(re, im);
    const int wm = g.matmul_nt(mag, g.leaf(cast_tensor<T>(tab.mel)));  // [T, 80]
    return g.log_(g.add_const(wm, 1.0));  // log1p
}

template int build_spectral_frames<float>(Graph<float>&, int, FrontendKind);
template int build_spectral_frames<double>(Graph<double>&, int, FrontendKind);
template int build_cochleagram<float>(Graph<float>&, int);
template int build_cochleagram<double>(Graph<double>&, int);
template int build_mel<float>(Graph<float>&, int);
template int build_mel<double>(Graph<double>&, int);

namespace {
Spectrogram run_value_path(const audio::Waveform& w, TargetKind kind) {
    if (w.sample_rate != kSampleRate)
        throw std::invalid_argument("spectrogram input must be 16 kHz (resample first), got " +
                                    std::to_string(w.sample_rate));
    if (w.samples.size() < kWindow)
        throw std::invalid_argument("spectrogram input shorter than one analysis window");
    GraphF g;
    const int x = g.leaf({static_cast<int>(w.samples.size())}, std::vector<float>(w.samples));
    const int out = build_target(g, x, kind);
    const int frames = g.shape(out)[0], rows = g.shape(out)[1];
    const auto v = g.val(out);
    return from_frames_major(std::vector<float>(v.begin(), v.end()), frames, rows);
}
}  // namespace

Spectrogram cochleagram(const audio::Waveform& w) { return run_value_path(w, TargetKind::Cochleagram); }
Spectrogram mel_spectrogram(const audio::Waveform& w) { return run_value_path(w, TargetKind::Mel); }

Spectrogram from_frames_major(const std::vector<float>& tmajor, int frames, int rows) {
    if (tmajor.size() != static_cast<size_t>(frames) * rows)
        throw std::invalid_argument("from_frames_major: size mismatch");
    Spectrogram s;
    s.rows = rows;
    s.cols = frames;
    s.v.resize(tmajor.size());
    for (int t = 0; t < frames; ++t)
        for (int r = 0; r < rows; ++r)
            s.at(r, t) = tmajor[static_cast<size_t>(t) * rows + r];
    return s;
}

void save_cgrm(const std::string& path, const Spectrogram& s) {
    if (s.v.size() != static_cast<size_t>(s.rows) * s.cols)
        throw std::invalid_argument("save_cgrm: inconsistent spectrogram");
    ByteWriter b;
    b.put_str("CGRM");
    b.put<uint16_t>(1);
    b.put<uint32_t>(static_cast<uint32_t>(s.rows));
    b.put<uint32_t>(static_cast<uint32_t>(s.cols));
    b.put_bytes(s.v.data(), s.v.size() * sizeof(float));
    b.save(path);
}

Spectrogram load_cgrm(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    if (r.get_str(4) != "CGRM") throw std::runtime_error(path + ": not a CGRM file");
    const uint16_t ver = r.get<uint16_t>();
    if (ver != 1) throw std::runtime_error(path + ": unsupported CGRM version " + std::to_string(ver));
    Spectrogram s;
    s.rows = static_cast<int>(r.get<uint32_t>());
    s.cols = static_cast<int>(r.get<uint32_t>());
    if (s.rows <= 0 || s.cols <= 0 || static_cast<uint64_t>(s.rows) * s.cols > (1ull << 31))
        throw std::runtime_error(path + ": bad CGRM dimensions");
    const size_t n = static_cast<size_t>(s.rows) * s.cols;
    if (r.remaining() != n * sizeof(float)) throw std::runtime_error(path + ": CGRM payload size mismatch");
    s.v.resize(n);
    r.get_bytes(s.v.data(), n * sizeof(float));
    return s;
}

void save_pgm(const std::string& path, const Spectrogram& s) {
    if (s.v.empty()) throw std::invalid_argument("save_pgm: empty spectrogram");
    float lo = s.v[0], hi = s.v[0];
    for (float x : s.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const float range = hi - lo;
    std::vector<uint8_t> img(static_cast<size_t>(s.rows) * s.cols);
    for (int r = 0; r < s.rows; ++r) {
        for (int c = 0; c < s.cols; ++c) {
            const float x = s.at(s.rows - 1 - r, c);  // flip: low channels at the bottom
            const float n = range > 0 ? (x - lo) / range : 0.0f;
            img[static_cast<size_t>(r) * s.cols + c] = static_cast<uint8_t>(std::lround(n * 255.0f));
        }
    }
    write_pgm(path, s.rows, s.cols, img);
}

}  // namespace coch::dsp
