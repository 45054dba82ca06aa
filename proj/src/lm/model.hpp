#pragma once
// Decoder-only autoregressive transformer over cochlear token ids: pre-norm
// blocks (RMSNorm -> causal multi-head attention -> residual, RMSNorm -> SiLU
// MLP at 4x width -> residual), a final RMSNorm, learned positional
// embedding, and an untied zero-initialized output head so an untrained
// model scores every token uniformly (CE = ln vocab, exactly).

#include <cstdint>
#include <string>
#include <vector>

#include "core/graph.hpp"
#include "core/random.hpp"
#include "core/tensor.hpp"

namespace coch::lm {

struct LmConfig {
    int n_layers = 12;
    int n_heads = 12;
    int d_model = 784;
    int context_len = 4096;
    int vocab = 8192;
    double dropout = 0.0;  // recorded for config compatibility; must be 0

    int head_dim() const { return d_model / n_heads; }
    int mlp_dim() const { return 4 * d_model; }
    void validate() const;
    // "100M" (12 layers, 12 heads, d=784), "1B" (48, 16, 1280),
    // "tiny" (4, 4, 128, context 512)
    static LmConfig preset(const std::string& name);
};

struct LmModel {
    LmConfig cfg;
    std::vector<Param> params;
};

LmModel init_lm(const LmConfig& cfg, uint64_t seed);
size_t param_count(const LmModel& m);

// ---- graph wiring ----
template <typename T>
struct LmGraphParams {
    std::vector<int> ids;  // leaf per tensor, model order
    int at(size_t i) const { return ids.at(i); }
};

template <typename T>
LmGraphParams<T> wire_lm_params(Graph<T>& g, const LmModel& m, bool requires_grad);

struct LmForwardOptions {
    bool last_only = false;    // logits for the final position only ([1, vocab])
    bool want_hidden = false;  // record residual-stream levels
    bool want_attn = false;    // record attention probability nodes (tests)
};

template <typename T>
struct LmForward {
    int logits = -1;          // [T, vocab], or [1, vocab] when last_only
    std::vector<int> levels;  // n_layers+1 nodes [T, d]; level 0 = embedding+position
    std::vector<int> attn;    // [T, T] softmax rows, layer-major then head
};

// tokens: 1 <= T <= context_len, every id in [0, vocab)
template <typename T>
LmForward<T> build_lm(Graph<T>& g, const LmConfig& cfg, const LmGraphParams<T>& p,
                      const std::vector<int>& tokens, const LmForwardOptions& opt = {});

// mean next-token cross entropy: positions 0..T-2 predict tokens 1..T-1
template <typename T>
int build_lm_loss(Graph<T>& g, const LmConfig& cfg, const LmGraphParams<T>& p,
                  const std::vector<int>& tokens);

// ---- value-level API ----
double lm_loss_value(const LmModel& m, const std::vector<int>& tokens);

// residual-stream activations, n_layers+1 tensors of [T, d]
std::vector<TensorF> lm_hidden_states(const LmModel& m, const std::vector<int>& tokens);

// Iterative sampling. temperature 0 = argmax mode; top_k 0 or >= vocab keeps
// the full distribution. Prompts longer than the context are truncated from
// the left each step (sliding window).
std::vector<uint16_t> generate(const LmModel& m, const std::vector<uint16_t>& prompt, int n_new,
                               double temperature, int top_k, uint64_t seed);

enum class Pooling { Mean, Max, Min };
Pooling pooling_from_string(const std::string& s);
std::string to_string(Pooling p);

struct Span {
    long a = 0, b = 0;  // token interval [a, b)
};

// One pooled vector per span: run the window ending at the span's last token
// (at most context_len wide), take the chosen residual level (0 = embedding),
// pool the span's positions. Returns [n_spans, d].
TensorF extract_embeddings(const LmModel& m, const std::vector<uint16_t>& tokens,
                           const std::vector<Span>& spans, int layer, Pooling pooling);

}  // namespace coch::lm
