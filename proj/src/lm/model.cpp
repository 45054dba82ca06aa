#include "lm/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coch::lm {

namespace {
constexpr double kRmsEps = 1e-5;
constexpr double kMaskValue = -1e9;  // exp underflows to exactly 0 after softmax shift
constexpr double kInitStd = 0.02;
}  // namespace

void LmConfig::validate() const {
    if (n_layers < 1 || n_heads < 1) throw std::invalid_argument("lm: layers and heads must be >= 1");
    if (d_model < n_heads || d_model % n_heads != 0)
        throw std::invalid_argument("lm: d_model must be a positive multiple of n_heads");
    if (context_len < 2) throw std::invalid_argument("lm: context_len must be >= 2");
    if (vocab < 2 || vocab > 65536) throw std::invalid_argument("lm: vocab must be in [2, 65536]");
    if (dropout != 0.0) throw std::invalid_argument("lm: only dropout 0 is supported");
}

LmConfig LmConfig::preset(const std::string& name) {
    LmConfig c;
    if (name == "100M") {
        c.n_layers = 12, c.n_heads = 12, c.d_model = 784;
    } else if (name == "1B") {
        c.n_layers = 48, c.n_heads = 16, c.d_model = 1280;
    } else if (name == "tiny") {
        c.n_layers = 4, c.n_heads = 4, c.d_model = 128, c.context_len = 512;
    } else {
        throw std::invalid_argument("unknown lm preset '" + name + "'");
    }
    return c;
}

LmModel init_lm(const LmConfig& cfg, uint64_t seed) {
    cfg.validate();
    RandomSource rng(seed);
    LmModel m;
    m.cfg = cfg;
    auto add = [&m](const std::string& name, Shape shape, double sd, RandomSource* r) {
        TensorF t(std::move(shape));
        if (r) r->fill_normal(t.v, 0.0, sd);
        m.params.push_back({name, std::move(t)});
    };
    auto ones = [&m](const std::string& name, int n) {
        TensorF t({n});
        std::fill(t.v.begin(), t.v.end(), 1.0f);
        m.params.push_back({name, std::move(t)});
    };

    add("tok_emb", {cfg.vocab, cfg.d_model}, kInitStd, &rng);
    add("pos_emb", {cfg.context_len, cfg.d_model}, kInitStd, &rng);
    const double resid_sd = kInitStd / std::sqrt(2.0 * cfg.n_layers);  // residual-path damping
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string b = "blk." + std::to_string(l) + ".";
        ones(b + "ln1.g", cfg.d_model);
        add(b + "attn.wq", {cfg.d_model, cfg.d_model}, kInitStd, &rng);
        add(b + "attn.wk", {cfg.d_model, cfg.d_model}, kInitStd, &rng);
        add(b + "attn.wv", {cfg.d_model, cfg.d_model}, kInitStd, &rng);
        add(b + "attn.wo", {cfg.d_model, cfg.d_model}, resid_sd, &rng);
        ones(b + "ln2.g", cfg.d_model);
        add(b + "mlp.w1", {cfg.d_model, cfg.mlp_dim()}, kInitStd, &rng);
        add(b + "mlp.w2", {cfg.mlp_dim(), cfg.d_model}, resid_sd, &rng);
    }
    ones("lnf.g", cfg.d_model);
    add("head.w", {cfg.d_model, cfg.vocab}, 0.0, nullptr);  // zero head: uniform start
    return m;
}

size_t param_count(const LmModel& m) {
    size_t n = 0;
    for (const auto& p : m.params) n += p.t.size();
    return n;
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
LmGraphParams<T> wire_lm_params(Graph<T>& g, const LmModel& m, bool requires_grad) {
    LmGraphParams<T> p;
    p.ids.reserve(m.params.size());
    for (const auto& par : m.params) p.ids.push_back(g.leaf(cast_tensor<T>(par.t), requires_grad));
    return p;
}

template <typename T>
LmForward<T> build_lm(Graph<T>& g, const LmConfig& cfg, const LmGraphParams<T>& p,
                      const std::vector<int>& tokens, const LmForwardOptions& opt) {
    const int Tn = static_cast<int>(tokens.size());
    if (Tn < 1) throw std::invalid_argument("lm: empty token sequence");
    if (Tn > cfg.context_len)
        throw std::invalid_argument("lm: sequence of " + std::to_string(Tn) +
                                    " tokens exceeds context " + std::to_string(cfg.context_len));
    for (int id : tokens)
        if (id < 0 || id >= cfg.vocab) throw std::invalid_argument("lm: token id out of range");

    size_t pi = 0;
    const int tok_emb = p.at(pi++), pos_emb = p.at(pi++);
    LmForward<T> out;
    int x = g.add(g.embed_rows(tok_emb, tokens), g.take_rows(pos_emb, 0, Tn));
    if (opt.want_hidden) out.levels.push_back(x);

    // additive causal mask, shared by every layer
    Tensor<T> mask({Tn, Tn});
    for (int i = 0; i < Tn; ++i)
        for (int j = i + 1; j < Tn; ++j) mask.v[static_cast<size_t>(i) * Tn + j] = static_cast<T>(kMaskValue);
    const int mask_node = g.leaf(mask);
    const int dh = cfg.head_dim();
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    for (int l = 0; l < cfg.n_layers; ++l) {
        const int ln1 = p.at(pi++), wq = p.at(pi++), wk = p.at(pi++), wv = p.at(pi++), wo = p.at(pi++);
        const int ln2 = p.at(pi++), w1 = p.at(pi++), w2 = p.at(pi++);

        const int h = g.rmsnorm(x, ln1, kRmsEps);
        const int q = g.matmul(h, wq), k = g.matmul(h, wk), v = g.matmul(h, wv);
        std::vector<int> heads(cfg.n_heads);
        for (int hd = 0; hd < cfg.n_heads; ++hd) {
            const int c0 = hd * dh, c1 = c0 + dh;
            const int scores = g.scale(g.matmul_nt(g.slice_cols(q, c0, c1), g.slice_cols(k, c0, c1)),
                                       att_scale);
            const int probs = g.softmax_rows(g.add(scores, mask_node));
            if (opt.want_attn) out.attn.push_back(probs);
            heads[hd] = g.matmul(probs, g.slice_cols(v, c0, c1));
        }
        x = g.add(x, g.matmul(g.concat_cols(heads), wo));
        const int mh = g.rmsnorm(x, ln2, kRmsEps);
        x = g.add(x, g.matmul(g.silu(g.matmul(mh, w1)), w2));
        if (opt.want_hidden) out.levels.push_back(x);
    }

    const int lnf = p.at(pi++), head = p.at(pi++);
    const int tail = opt.last_only ? g.take_rows(x, Tn - 1, Tn) : x;
    out.logits = g.matmul(g.rmsnorm(tail, lnf, kRmsEps), head);
    return out;
}

template <typename T>
int build_lm_loss(Graph<T>& g, const LmConfig& cfg, const LmGraphParams<T>& p,
                  const std::vector<int>& tokens) {
    if (tokens.size() < 2) throw std::invalid_argument("lm loss needs at least 2 tokens");
    const auto fwd = build_lm(g, cfg, p, tokens);
    const int Tn = static_cast<int>(tokens.size());
    const std::vector<int> targets(tokens.begin() + 1, tokens.end());
    return g.cross_entropy_mean(g.take_rows(fwd.logits, 0, Tn - 1), targets);
}

template LmGraphParams<float> wire_lm_params(Graph<float>&, const LmModel&, bool);
template LmGraphParams<double> wire_lm_params(Graph<double>&, const LmModel&, bool);
template LmForward<float> build_lm(Graph<float>&, const LmConfig&, const LmGraphParams<float>&,
                                   const std::vector<int>&, const LmForwardOptions&);
template LmForward<double> build_lm(Graph<double>&, const LmConfig&, const LmGraphParams<double>&,
                                    const std::vector<int>&, const LmForwardOptions&);
template int build_lm_loss(Graph<float>&, const LmConfig&, const LmGraphParams<float>&,
                           const std::vector<int>&);
template int build_lm_loss(Graph<double>&, const LmConfig&, const LmGraphParams<double>&,
                           const std::vector<int>&);

double lm_loss_value(const LmModel& m, const std::vector<int>& tokens) {
    GraphF g;
    const auto p = wire_lm_params(g, m, false);
    return g.scalar(build_lm_loss(g, m.cfg, p, tokens));
}

std::vector<TensorF> lm_hidden_states(const LmModel& m, const std::vector<int>& tokens) {
    GraphF g;
    const auto p = wire_lm_params(g, m, false);
    LmForwardOptions opt;
    opt.want_hidden = true;
    const auto fwd = build_lm(g, m.cfg, p, tokens, opt);
    std::vector<TensorF> out;
    out.reserve(fwd.levels.size());
    for (int id : fwd.levels) {
        const auto v = g.val(id);
        out.emplace_back(g.shape(id), std::vector<float>(v.begin(), v.end()));
    }
    return out;
}

namespace {

// sample one id from a logit row; temperature 0 = argmax, ties to lowest id
int sample_row(const float* z, int vocab, double temperature, int top_k, RandomSource& rng) {
    if (temperature == 0.0) {
        int best = 0;
        for (int i = 1; i < vocab; ++i)
            if (z[i] > z[best]) best = i;
        return best;
    }
    std::vector<char> keep(vocab, 1);
    if (top_k > 0 && top_k < vocab) {
        std::vector<int> order(vocab);
        for (int i = 0; i < vocab; ++i) order[i] = i;
        std::nth_element(order.begin(), order.begin() + top_k, order.end(),
                         [&](int a, int b) { return z[a] > z[b] || (z[a] == z[b] && a < b); });
        std::fill(keep.begin(), keep.end(), 0);
        for (int i = 0; i < top_k; ++i) keep[order[i]] = 1;
    }
    double mx = -1e300;
    for (int i = 0; i < vocab; ++i)
        if (keep[i]) mx = std::max(mx, static_cast<double>(z[i]) / temperature);
    double total = 0.0;
    std::vector<double> w(vocab, 0.0);
    for (int i = 0; i < vocab; ++i) {
        if (!keep[i]) continue;
        w[i] = std::exp(static_cast<double>(z[i]) / temperature - mx);
        total += w[i];
    }
    const double u = rng.uniform01() * total;
    double acc = 0.0;
    int last = 0;
    for (int i = 0; i < vocab; ++i) {
        if (!keep[i]) continue;
        acc += w[i];
        last = i;
        if (u < acc) return i;
    }
    return last;  // numeric edge: u == total
}

}  // namespace

std::vector<uint16_t> generate(const LmModel& m, const std::vector<uint16_t>& prompt, int n_new,
                               double temperature, int top_k, uint64_t seed) {
    if (prompt.empty()) throw std::invalid_argument("generate: prompt must not be empty");
    if (n_new < 0) throw std::invalid_argument("generate: n_new must be >= 0");
    if (temperature < 0.0) throw std::invalid_argument("generate: temperature must be >= 0");
    if (top_k < 0 || top_k > m.cfg.vocab)
        throw std::invalid_argument("generate: top_k must be in [0, vocab]");
    for (uint16_t id : prompt)
        if (id >= m.cfg.vocab) throw std::invalid_argument("generate: prompt id out of range");

    std::vector<uint16_t> out(prompt);
    out.reserve(prompt.size() + n_new);
    RandomSource rng(seed);
    LmForwardOptions opt;
    opt.last_only = true;
    for (int i = 0; i < n_new; ++i) {
        const size_t w0 = out.size() > static_cast<size_t>(m.cfg.context_len)
                              ? out.size() - m.cfg.context_len
                              : 0;
        const std::vector<int> window(out.begin() + w0, out.end());
        GraphF g;
        const auto p = wire_lm_params(g, m, false);
        const auto fwd = build_lm(g, m.cfg, p, window, opt);
        const auto z = g.val(fwd.logits);
        out.push_back(static_cast<uint16_t>(sample_row(z.data(), m.cfg.vocab, temperature, top_k, rng)));
    }
    return out;
}

Pooling pooling_from_string(const std::string& s) {
    if (s == "mean") return Pooling::Mean;
    if (s == "max") return Pooling::Max;
    if (s == "min") return Pooling::Min;
    throw std::invalid_argument("unknown pooling '" + s + "' (mean|max|min)");
}

std::string to_string(Pooling p) {
    switch (p) {
        case Pooling::Mean: return "mean";
        case Pooling::Max: return "max";
        default: return "min";
    }
}

TensorF extract_embeddings(const LmModel& m, const std::vector<uint16_t>& tokens,
                           const std::vector<Span>& spans, int layer, Pooling pooling) {
    if (layer < 0 || layer > m.cfg.n_layers)
        throw std::invalid_argument("embedding layer must be in [0, n_layers]");
    const long Tn = static_cast<long>(tokens.size());
    TensorF out({static_cast<int>(spans.size()), m.cfg.d_model});
    for (size_t si = 0; si < spans.size(); ++si) {
        const auto [a, b] = spans[si];
        if (a < 0 || a >= b || b > Tn)
            throw std::invalid_argument("span [" + std::to_string(a) + "," + std::to_string(b) +
                                        ") is empty or out of bounds");
        if (b - a > m.cfg.context_len)
            throw std::invalid_argument("span longer than the model context");
        const long w0 = std::max(0l, b - m.cfg.context_len);
        std::vector<int> window(tokens.begin() + w0, tokens.begin() + b);

        GraphF g;
        const auto p = wire_lm_params(g, m, false);
        LmForwardOptions opt;
        opt.want_hidden = true;
        const auto fwd = build_lm(g, m.cfg, p, window, opt);
        const auto h = g.val(fwd.levels[layer]);
        const int d = m.cfg.d_model;

        float* dst = out.v.data() + si * d;
        const long s0 = a - w0, s1 = b - w0;
        for (int c = 0; c < d; ++c) {
            double acc = pooling == Pooling::Mean ? 0.0
                         : pooling == Pooling::Max ? -1e300
                                                   : 1e300;
            for (long t = s0; t < s1; ++t) {
                const double x = h[static_cast<size_t>(t) * d + c];
                if (pooling == Pooling::Mean) acc += x;
                else if (pooling == Pooling::Max) acc = std::max(acc, x);
                else acc = std::min(acc, x);
            }
            if (pooling == Pooling::Mean) acc /= static_cast<double>(s1 - s0);
            dst[c] = static_cast<float>(acc);
        }
    }
    return out;
}

}  // namespace coch::lm
