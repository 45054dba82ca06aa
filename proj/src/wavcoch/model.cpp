#include "wavcoch/model.hpp"

#include <cmath>
#include <stdexcept>

namespace coch::wavcoch {

WavCochConfig WavCochConfig::tiny(int bits) {
    WavCochConfig c;
    c.bit_width = bits;
    c.encoder_layers = 2;
    c.decoder_layers = 2;
    c.encoder_channels = 32;
    c.decoder_channels = 24;
    return c;
}

void WavCochConfig::validate() const {
    if (bit_width < 1 || bit_width > 16) throw std::invalid_argument("bit_width must be in [1,16]");
    if (encoder_layers < 1 || decoder_layers < 1) throw std::invalid_argument("layer counts must be >= 1");
    if (encoder_channels < 1 || decoder_channels < 1) throw std::invalid_argument("channel counts must be >= 1");
    if (enc_kernel < 1 || dec_kernel < 1) throw std::invalid_argument("kernels must be >= 1");
}

namespace {
TensorF init_conv(RandomSource& rng, int cout, int k, int cin) {
    TensorF w({cout, k * cin});
    rng.fill_normal(w.v, 0.0, std::sqrt(2.0 / (k * cin)));  // He init for relu stacks
    return w;
}
TensorF init_linear(RandomSource& rng, int in, int out) {
    TensorF w({in, out});
    rng.fill_normal(w.v, 0.0, std::sqrt(1.0 / in));
    return w;
}
}  // namespace

WavCochModel init_wavcoch(const WavCochConfig& cfg, uint64_t seed) {
    cfg.validate();
    RandomSource rng(seed);
    WavCochModel m;
    m.cfg = cfg;
    auto add = [&m](const std::string& name, TensorF t) { m.params.push_back({name, std::move(t)}); };

    int cin = cfg.frontend_dim();
    for (int l = 0; l < cfg.encoder_layers; ++l) {
        add("enc." + std::to_string(l) + ".w", init_conv(rng, cfg.encoder_channels, cfg.enc_kernel, cin));
        add("enc." + std::to_string(l) + ".b", TensorF({cfg.encoder_channels}));
        cin = cfg.encoder_channels;
    }
    add("lfq.w", init_linear(rng, cfg.encoder_channels, cfg.bit_width));
    add("lfq.b", TensorF({cfg.bit_width}));
    add("post.w", init_linear(rng, cfg.bit_width, cfg.encoder_channels));
    add("post.b", TensorF({cfg.encoder_channels}));

    cin = cfg.encoder_channels;
    for (int l = 0; l < cfg.decoder_layers; ++l) {
        const int cout = l == cfg.decoder_layers - 1 ? cfg.target_rows() : cfg.decoder_channels;
        add("dec." + std::to_string(l) + ".w", init_conv(rng, cout, cfg.dec_kernel, cin));
        add("dec." + std::to_string(l) + ".b", TensorF({cout}));
        cin = cout;
    }
    return m;
}

size_t param_count(const WavCochModel& m) {
    size_t n = 0;
    for (const auto& p : m.params) n += p.t.size();
    return n;
}

int bits_to_id(const float* bits, int bit_width) {
    int id = 0;
    for (int b = 0; b < bit_width; ++b)
        if (bits[b] > 0.0f) id |= 1 << b;
    return id;
}

std::vector<float> id_to_bits(int id, int bit_width) {
    if (id < 0 || id >= (1 << bit_width))
        throw std::invalid_argument("token id " + std::to_string(id) + " out of range for " +
                                    std::to_string(bit_width) + " bits");
    std::vector<float> bits(bit_width);
    for (int b = 0; b < bit_width; ++b) bits[b] = (id >> b) & 1 ? 1.0f : -1.0f;
    return bits;
}

namespace {
template <typename T>
Tensor<T> cast_tensor(const TensorF& src) {
    Tensor<T> out(src.shape);
    for (size_t i = 0; i < src.v.size(); ++i) out.v[i] = static_cast<T>(src.v[i]);
    return out;
}
}  // namespace

template <typename T>
GraphParams<T> wire_params(Graph<T>& g, const WavCochModel& m, bool requires_grad) {
    GraphParams<T> p;
    p.ids.reserve(m.params.size());
    for (const auto& par : m.params) p.ids.push_back(g.leaf(cast_tensor<T>(par.t), requires_grad));
    return p;
}

template <typename T>
static int decode_from(Graph<T>& g, const WavCochConfig& cfg, const GraphParams<T>& p, int bits_node,
                       size_t pi);

template <typename T>
ForwardNodes<T> build_forward(Graph<T>& g, const WavCochConfig& cfg, const GraphParams<T>& p,
                              int frames_node) {
    size_t pi = 0;
    int h = frames_node;
    int cin = cfg.frontend_dim();
    for (int l = 0; l < cfg.encoder_layers; ++l) {
        const int w = p.at(pi++), b = p.at(pi++);
        h = g.relu(g.conv1d(h, w, b, cfg.enc_kernel, cin, cfg.encoder_channels));
        cin = cfg.encoder_channels;
    }
    const int lfq_w = p.at(pi++), lfq_b = p.at(pi++);
    ForwardNodes<T> out;
    out.logits = g.add(g.matmul(h, lfq_w), lfq_b);
    out.bits = g.sign_ste(out.logits);
    out.recon = decode_from(g, cfg, p, out.bits, pi);
    return out;
}

template <typename T>
static int decode_from(Graph<T>& g, const WavCochConfig& cfg, const GraphParams<T>& p, int bits_node,
                       size_t pi) {
    const int post_w = p.at(pi++), post_b = p.at(pi++);
    int h = g.add(g.matmul(bits_node, post_w), post_b);
    int cin = cfg.encoder_channels;
    for (int l = 0; l < cfg.decoder_layers; ++l) {
        const int cout = l == cfg.decoder_layers - 1 ? cfg.target_rows() : cfg.decoder_channels;
        const int w = p.at(pi++), b = p.at(pi++);
        h = g.relu(g.conv1d(h, w, b, cfg.dec_kernel, cin, cout));
        cin = cout;
    }
    return h;
}

template <typename T>
int build_decode(Graph<T>& g, const WavCochConfig& cfg, const GraphParams<T>& p, int bits_node) {
    return decode_from(g, cfg, p, bits_node, static_cast<size_t>(2 * cfg.encoder_layers + 2));
}

template <typename T>
int build_entropy_penalty(Graph<T>& g, int logits) {
    const int Tn = g.shape(logits)[0];
    const int probs = g.sigmoid(g.scale(logits, 2.0));
    // safe binary entropy: H(p) = -p log(max(p,1e-7)) - (1-p) log(max(1-p,1e-7))
    auto ent = [&g](int p) {
        const int q = g.add_const(g.neg(p), 1.0);  // 1 - p
        const int lp = g.log_(g.clamp(p, 1e-7, 1e30));
        const int lq = g.log_(g.clamp(q, 1e-7, 1e30));
        return g.neg(g.add(g.mul(p, lp), g.mul(q, lq)));
    };
    // mean over frames of the per-frame bit-entropy sum
    const int per_frame = g.scale(g.sum(ent(probs)), 1.0 / Tn);
    // entropy of the batch-averaged bit probabilities
    const int usage = g.sum(ent(g.mean_axis0(probs)));
    return g.sub(per_frame, usage);
}

template <typename T>
int build_loss(Graph<T>& g, int recon, int target, int logits, double entropy_weight) {
    const int diff = g.sub(recon, target);
    const int mse = g.mean(g.mul(diff, diff));
    return g.add(mse, g.scale(build_entropy_penalty(g, logits), entropy_weight));
}

template GraphParams<float> wire_params(Graph<float>&, const WavCochModel&, bool);
template GraphParams<double> wire_params(Graph<double>&, const WavCochModel&, bool);
template ForwardNodes<float> build_forward(Graph<float>&, const WavCochConfig&, const GraphParams<float>&, int);
template ForwardNodes<double> build_forward(Graph<double>&, const WavCochConfig&, const GraphParams<double>&, int);
template int build_decode(Graph<float>&, const WavCochConfig&, const GraphParams<float>&, int);
template int build_decode(Graph<double>&, const WavCochConfig&, const GraphParams<double>&, int);
template int build_entropy_penalty(Graph<float>&, int);
template int build_entropy_penalty(Graph<double>&, int);
template int build_loss(Graph<float>&, int, int, int, double);
template int build_loss(Graph<double>&, int, int, int, double);

TensorF spectral_frames(const WavCochConfig& cfg, const audio::Waveform& w) {
    if (w.sample_rate != dsp::kSampleRate)
        throw std::invalid_argument("tokenizer input must be 16 kHz (resample first)");
    if (w.samples.size() < dsp::kWindow)
        throw std::invalid_argument("tokenizer input shorter than one analysis window");
    GraphF g;
    const int x = g.leaf({static_cast<int>(w.samples.size())}, std::vector<float>(w.samples));
    const int f = dsp::build_spectral_frames(g, x, cfg.frontend);
    auto v = g.val(f);
    return TensorF(g.shape(f), {v.begin(), v.end()});
}

TensorF target_frames(const WavCochConfig& cfg, const audio::Waveform& w) {
    if (w.sample_rate != dsp::kSampleRate)
        throw std::invalid_argument("target input must be 16 kHz (resample first)");
    GraphF g;
    const int x = g.leaf({static_cast<int>(w.samples.size())}, std::vector<float>(w.samples));
    const int t = dsp::build_target(g, x, cfg.target);
    auto v = g.val(t);
    return TensorF(g.shape(t), {v.begin(), v.end()});
}

TokenStream tokenize_frames(const WavCochModel& m, const TensorF& frames) {
    if (frames.cols() != m.cfg.frontend_dim())
        throw std::invalid_argument("tokenize_frames: frame dim mismatch");
    GraphF g;
    const auto p = wire_params(g, m, false);
    const auto fwd = build_forward(g, m.cfg, p, g.leaf(frames));
    const auto bits = g.val(fwd.bits);
    TokenStream out;
    out.bit_width = m.cfg.bit_width;
    out.ids.resize(frames.rows());
    for (int t = 0; t < frames.rows(); ++t)
        out.ids[t] = static_cast<uint16_t>(bits_to_id(bits.data() + static_cast<size_t>(t) * m.cfg.bit_width,
                                                      m.cfg.bit_width));
    return out;
}

TokenStream tokenize(const WavCochModel& m, const audio::Waveform& w) {
    return tokenize_frames(m, spectral_frames(m.cfg, w));
}

dsp::Spectrogram detokenize(const WavCochModel& m, const TokenStream& tokens) {
    if (tokens.bit_width != m.cfg.bit_width)
        throw std::invalid_argument("detokenize: token bit width " + std::to_string(tokens.bit_width) +
                                    " does not match model bit width " + std::to_string(m.cfg.bit_width));
    if (tokens.ids.empty()) throw std::invalid_argument("detokenize: empty token stream");
    const int Tn = static_cast<int>(tokens.ids.size());
    const int B = m.cfg.bit_width;
    TensorF bits({Tn, B});
    for (int t = 0; t < Tn; ++t) {
        const auto bv = id_to_bits(tokens.ids[t], B);
        std::copy(bv.begin(), bv.end(), bits.v.begin() + static_cast<size_t>(t) * B);
    }
    GraphF g;
    const auto p = wire_params(g, m, false);
    const int recon = build_decode(g, m.cfg, p, g.leaf(bits));
    const auto v = g.val(recon);
    return dsp::from_frames_major({v.begin(), v.end()}, Tn, m.cfg.target_rows());
}

}  // namespace coch::wavcoch
