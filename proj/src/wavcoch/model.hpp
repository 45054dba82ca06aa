#pragma once
// Waveform tokenizer: causal conv encoder over fixed spectral frames, a
// sign-quantized bottleneck (one token id per 5 ms frame, bit b set iff
// logit b > 0), and a causal conv decoder trained to reproduce the
// cochleagram (or mel) of the same clip. Straight-through gradients pass the
// quantizer unchanged.

#include <cstdint>
#include <string>
#include <vector>

#include "audio/wav.hpp"
#include "core/graph.hpp"
#include "core/random.hpp"
#include "core/tensor.hpp"
#include "dsp/frontend.hpp"

namespace coch::wavcoch {

struct WavCochConfig {
    int bit_width = 13;
    int encoder_layers = 8;
    int decoder_layers = 8;
    int encoder_channels = 512;
    int decoder_channels = 211;  // hidden width of the decoder stack
    int enc_kernel = 3;
    int dec_kernel = 9;
    dsp::FrontendKind frontend = dsp::FrontendKind::Magnitude;
    dsp::TargetKind target = dsp::TargetKind::Cochleagram;

    int vocab() const { return 1 << bit_width; }
    int target_rows() const { return dsp::target_rows(target); }
    int frontend_dim() const { return dsp::frontend_dim(frontend); }
    // conservative causal receptive fields in frames
    int encoder_margin() const { return encoder_layers * (enc_kernel - 1) + 1; }
    int decoder_margin() const { return decoder_layers * (dec_kernel - 1) + 1; }

    static WavCochConfig tiny(int bits = 13);  // small config for fast tests
    void validate() const;
};

struct WavCochModel {
    WavCochConfig cfg;
    std::vector<Param> params;
};

WavCochModel init_wavcoch(const WavCochConfig& cfg, uint64_t seed);
size_t param_count(const WavCochModel& m);

// ---- bit/id mapping (dimension 0 is the least-significant bit) ----
int bits_to_id(const float* bits, int bit_width);       // bits in {-1,+1}
std::vector<float> id_to_bits(int id, int bit_width);   // throws on out-of-range

// ---- graph wiring (templated: f32 for training, f64 for grad checks) ----
template <typename T>
struct GraphParams {
    std::vector<int> ids;  // leaf node per param, model order
    int at(size_t i) const { return ids.at(i); }
};

template <typename T>
GraphParams<T> wire_params(Graph<T>& g, const WavCochModel& m, bool requires_grad);

template <typename T>
struct ForwardNodes {
    int logits = -1;  // [T, bit_width]
    int bits = -1;    // [T, bit_width], straight-through sign
    int recon = -1;   // [T, target_rows]
};

// frames_node: [T, frontend_dim] spectral frames
template <typename T>
ForwardNodes<T> build_forward(Graph<T>& g, const WavCochConfig& cfg, const GraphParams<T>& p,
                              int frames_node);

// decoder only, bits_node: [T, bit_width] in {-1,+1}
template <typename T>
int build_decode(Graph<T>& g, const WavCochConfig& cfg, const GraphParams<T>& p, int bits_node);

// factorized per-bit entropy penalty over logits [T,B], in nats:
//   mean_t sum_b H(sigmoid(2 z_tb)) - sum_b H(mean_t sigmoid(2 z_tb))
// H computed with the log arguments floored at 1e-7 so saturated
// probabilities give exactly zero entropy.
template <typename T>
int build_entropy_penalty(Graph<T>& g, int logits);

// reconstruction + codebook shaping: mse(recon, target) + 0.001 * entropy
template <typename T>
int build_loss(Graph<T>& g, int recon, int target, int logits, double entropy_weight = 0.001);

// ---- value-level API ----
struct TokenStream {
    std::vector<uint16_t> ids;
    int bit_width = 13;
    int frame_rate_hz = dsp::kFrameRate;
};

// any 16 kHz waveform of at least one analysis window
TokenStream tokenize(const WavCochModel& m, const audio::Waveform& w);
// tokenize precomputed spectral frames [T, frontend_dim]
TokenStream tokenize_frames(const WavCochModel& m, const TensorF& frames);
// ids -> reconstructed spectrogram [rows, T]
dsp::Spectrogram detokenize(const WavCochModel& m, const TokenStream& tokens);

// spectral frames + target for one clip, via the same graph builders the
// trainer uses
TensorF spectral_frames(const WavCochConfig& cfg, const audio::Waveform& w);
TensorF target_frames(const WavCochConfig& cfg, const audio::Waveform& w);  // [T, rows]

}  // namespace coch::wavcoch
