#pragma once
// AdamW with decoupled weight decay and bias correction, plus the
// warmup+cosine learning-rate schedule. Moments are kept per parameter
// tensor in the same order as the model's parameter list.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "core/tensor.hpp"

namespace coch {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    long step = 0;  // number of updates applied so far
    std::vector<std::vector<float>> m, v;

    void init_like(const std::vector<Param>& params) {
        step = 0;
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.t.size(), 0.0f);
            v.emplace_back(p.t.size(), 0.0f);
        }
    }
    bool empty() const { return m.empty(); }
};

// One update: m,v moment update, bias-corrected step, decay decoupled from
// the gradient (applied to the parameter value, scaled by lr).
inline void adamw_step(std::vector<Param>& params, const std::vector<TensorF>& grads,
                       AdamWState& st, double lr, const AdamWConfig& cfg = {}) {
    if (params.size() != grads.size()) throw std::invalid_argument("adamw_step: grads/params count mismatch");
    if (st.empty()) st.init_like(params);
    if (st.m.size() != params.size()) throw std::invalid_argument("adamw_step: state does not match params");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& w = params[pi].t.v;
        const auto& g = grads[pi].v;
        if (g.size() != w.size()) throw std::invalid_argument("adamw_step: grad shape mismatch at " + params[pi].name);
        auto& m = st.m[pi];
        auto& v = st.v[pi];
        for (size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            w[i] = static_cast<float>(w[i] - lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w[i]));
        }
    }
}

struct ScheduleSpec {
    double peak_lr = 3e-4;
    double floor_lr = 0.0;
    long warmup_steps = 2000;
    long total_steps = 500000;
};

// Linear ramp 0 -> peak over [0, warmup], then cosine decay peak -> floor over
// (warmup, total]; continuous at the joint, clamped to floor beyond total.
inline double lr_at(long step, const ScheduleSpec& s) {
    if (step < 0) throw std::invalid_argument("lr_at: negative step");
    if (s.warmup_steps > 0 && step <= s.warmup_steps)
        return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    if (step >= s.total_steps) return s.floor_lr;
    const double frac = static_cast<double>(step - s.warmup_steps) /
                        static_cast<double>(s.total_steps - s.warmup_steps);
    return s.floor_lr + (s.peak_lr - s.floor_lr) * 0.5 * (1.0 + std::cos(M_PI * frac));
}

}  // namespace coch
