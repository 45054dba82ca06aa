#include "inversion/invert.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "core/graph.hpp"
#include "core/optim.hpp"
#include "core/random.hpp"

namespace coch::inversion {

InversionResult invert_cochleagram(const dsp::Spectrogram& target, const InversionConfig& cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("inversion: steps must be >= 1");
    if (cfg.lr <= 0.0) throw std::invalid_argument("inversion: lr must be > 0");
    if (cfg.init_std < 0.0) throw std::invalid_argument("inversion: init_std must be >= 0");
    if (target.rows != dsp::target_rows(cfg.target))
        throw std::invalid_argument("inversion: target has " + std::to_string(target.rows) +
                                    " rows, expected " + std::to_string(dsp::target_rows(cfg.target)));
    if (target.cols < 1) throw std::invalid_argument("inversion: empty target");

    const int Tn = target.cols;
    const int n = 80 * Tn + 960;  // 80,000 samples for the standard 988-frame clip
    TensorF goal({Tn, target.rows});  // builders emit [frames, channels]
    for (int t = 0; t < Tn; ++t)
        for (int r = 0; r < target.rows; ++r) goal.at(t, r) = target.at(r, t);

    RandomSource rng(cfg.seed);
    std::vector<Param> cand(1);
    cand[0].name = "waveform";
    cand[0].t = TensorF({n});
    rng.fill_normal(cand[0].t.v, 0.0, cfg.init_std);

    AdamWState opt;
    const AdamWConfig adam{0.9, 0.999, 1e-8, 0.0};  // no decay: pure Adam

    InversionResult res;
    res.trace.reserve(cfg.steps + 1);
    for (long step = 0;; ++step) {
        GraphF g;
        const int x = g.leaf(cand[0].t, true);
        const int c = dsp::build_target(g, x, cfg.target);
        const int diff = g.sub(c, g.leaf(goal));
        const int loss = g.mean(g.mul(diff, diff));
        const double l = g.scalar(loss);
        res.trace.push_back(l);
        if (!std::isfinite(l)) {
            res.aborted = true;
            break;
        }
        if (step >= cfg.steps || (cfg.stop_loss >= 0.0 && l <= cfg.stop_loss)) break;
        g.backward(loss);
        std::vector<TensorF> grads{g.grad_tensor(x)};
        adamw_step(cand, grads, opt, cfg.lr, adam);
    }

    res.wav.sample_rate = dsp::kSampleRate;
    res.wav.samples.resize(n);
    // the last 39 samples fall outside every analysis window, so no gradient
    // ever reaches them; export silence there instead of leftover init noise
    const int covered = 80 * (Tn - 1) + dsp::kWindow;
    for (int i = 0; i < n; ++i)
        res.wav.samples[i] = i < covered ? std::clamp(cand[0].t.v[i], -1.0f, 1.0f) : 0.0f;
    return res;
}

}  // namespace coch::inversion
