#include "eval/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "core/random.hpp"

namespace coch::eval {

namespace {

// mean CE + l2/2 ||W||^2 and its gradient, all in double
struct Objective {
    const std::vector<double>& x;  // [n, d] standardized
    long n;
    int d, k;
    const std::vector<int>& y;
    double l2;

    double eval(const std::vector<double>& w, const std::vector<double>& b,
                std::vector<double>* gw, std::vector<double>* gb) const {
        if (gw) {
            gw->assign(w.size(), 0.0);
            gb->assign(b.size(), 0.0);
        }
        double ce = 0.0;
        std::vector<double> z(k);
        for (long i = 0; i < n; ++i) {
            const double* xi = &x[static_cast<size_t>(i) * d];
            for (int c = 0; c < k; ++c) {
                double s = b[c];
                for (int j = 0; j < d; ++j) s += xi[j] * w[static_cast<size_t>(j) * k + c];
                z[c] = s;
            }
            const double zmax = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            for (int c = 0; c < k; ++c) {
                z[c] = std::exp(z[c] - zmax);
                sum += z[c];
            }
            ce += -(std::log(z[y[i]]) - std::log(sum));
            if (gw) {
                for (int c = 0; c < k; ++c) {
                    const double r = z[c] / sum - (c == y[i] ? 1.0 : 0.0);
                    (*gb)[c] += r;
                    for (int j = 0; j < d; ++j) (*gw)[static_cast<size_t>(j) * k + c] += xi[j] * r;
                }
            }
        }
        double obj = ce / n;
        for (double v : w) obj += 0.5 * l2 * v * v;
        if (gw) {
            for (auto& v : *gw) v /= n;
            for (auto& v : *gb) v /= n;
            for (size_t i = 0; i < w.size(); ++i) (*gw)[i] += l2 * w[i];
        }
        return obj;
    }
};

}  // namespace

ProbeModel train_linear_probe(const TensorF& features, const std::vector<int>& labels,
                              const std::vector<std::string>& classes, const ProbeConfig& cfg) {
    if (features.shape.size() != 2) throw std::invalid_argument("probe: features must be [N, d]");
    const long n = features.shape[0];
    const int d = features.shape[1];
    const int k = static_cast<int>(classes.size());
    if (k < 2) throw std::invalid_argument("probe: need at least 2 classes");
    if (static_cast<long>(labels.size()) != n) throw std::invalid_argument("probe: label count mismatch");
    if (n < k) throw std::invalid_argument("probe: fewer examples than classes");
    if (cfg.l2_strength < 0.0 || cfg.max_iters < 1 || cfg.tol <= 0.0 || cfg.init_scale < 0.0)
        throw std::invalid_argument("probe: bad config");
    for (float v : features.v)
        if (!std::isfinite(v)) throw std::invalid_argument("probe: non-finite feature");
    std::set<int> distinct;
    for (int y : labels) {
        if (y < 0 || y >= k) throw std::invalid_argument("probe: label out of range");
        distinct.insert(y);
    }
    if (distinct.size() < 2) throw std::invalid_argument("probe: degenerate single-class input");

    ProbeModel m;
    m.classes = classes;
    m.mu.assign(d, 0.0f);
    m.sigma.assign(d, 1.0f);
    if (cfg.standardize) {
        std::vector<double> mu(d, 0.0), var(d, 0.0);
        for (long i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) mu[j] += features.v[static_cast<size_t>(i) * d + j];
        for (int j = 0; j < d; ++j) mu[j] /= n;
        for (long i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) {
                const double c = features.v[static_cast<size_t>(i) * d + j] - mu[j];
                var[j] += c * c;
            }
        for (int j = 0; j < d; ++j) {
            const double sd = std::sqrt(var[j] / n);
            m.mu[j] = static_cast<float>(mu[j]);
            m.sigma[j] = sd > 1e-12 ? static_cast<float>(sd) : 1.0f;  // constant feature -> centered zero
        }
    }

    std::vector<double> x(static_cast<size_t>(n) * d);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            x[static_cast<size_t>(i) * d + j] =
                (features.v[static_cast<size_t>(i) * d + j] - m.mu[j]) / m.sigma[j];

    std::vector<double> w(static_cast<size_t>(d) * k, 0.0), b(k, 0.0);
    if (cfg.init_scale > 0.0) {
        RandomSource rng(cfg.seed);
        std::vector<float> init(w.size());
        rng.fill_normal(init, 0.0, cfg.init_scale);
        for (size_t i = 0; i < w.size(); ++i) w[i] = init[i];
    }

    const Objective obj{x, n, d, k, labels, cfg.l2_strength};
    std::vector<double> gw, gb, tw(w.size()), tb(b.size());
    double f = obj.eval(w, b, &gw, &gb);
    double step = 1.0;
    long it = 0;
    for (; it < cfg.max_iters; ++it) {
        double g2 = 0.0;
        for (double v : gw) g2 += v * v;
        for (double v : gb) g2 += v * v;
        if (std::sqrt(g2) < cfg.tol) break;

        // Armijo backtracking; the accepted step seeds the next iteration
        step = std::min(step * 2.0, 1e6);
        bool accepted = false;
        while (step > 1e-20) {
            for (size_t i = 0; i < w.size(); ++i) tw[i] = w[i] - step * gw[i];
            for (size_t i = 0; i < b.size(); ++i) tb[i] = b[i] - step * gb[i];
            const double ft = obj.eval(tw, tb, nullptr, nullptr);
            if (ft <= f - 1e-4 * step * g2) {
                w.swap(tw);
                b.swap(tb);
                f = obj.eval(w, b, &gw, &gb);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // step underflow: at numerical optimum
    }

    m.w = TensorF({d, k});
    for (size_t i = 0; i < w.size(); ++i) {
        if (!std::isfinite(w[i])) throw std::runtime_error("probe: diverged to non-finite weights");
        m.w.v[i] = static_cast<float>(w[i]);
    }
    m.b.resize(k);
    for (int c = 0; c < k; ++c) m.b[c] = static_cast<float>(b[c]);
    m.final_objective = f;
    m.iters = it;
    return m;
}

std::vector<int> probe_predict(const ProbeModel& m, const TensorF& features) {
    if (features.shape.size() != 2 || features.shape[1] != m.w.shape[0])
        throw std::invalid_argument("probe_predict: feature dimension mismatch");
    const long n = features.shape[0];
    const int d = m.w.shape[0], k = m.w.shape[1];
    std::vector<int> preds(n);
    for (long i = 0; i < n; ++i) {
        int best = 0;
        double best_z = -1e300;
        for (int c = 0; c < k; ++c) {
            double z = m.b[c];
            for (int j = 0; j < d; ++j)
                z += (static_cast<double>(features.v[static_cast<size_t>(i) * d + j]) - m.mu[j]) /
                     m.sigma[j] * m.w.v[static_cast<size_t>(j) * k + c];
            if (z > best_z) {
                best_z = z;
                best = c;
            }
        }
        preds[i] = best;
    }
    return preds;
}

double probe_ce(const ProbeModel& m, const TensorF& features, const std::vector<int>& labels) {
    if (features.shape.size() != 2 || features.shape[1] != m.w.shape[0])
        throw std::invalid_argument("probe_ce: feature dimension mismatch");
    const long n = features.shape[0];
    if (static_cast<long>(labels.size()) != n) throw std::invalid_argument("probe_ce: label count mismatch");
    if (n == 0) throw std::invalid_argument("probe_ce: empty input");
    const int d = m.w.shape[0], k = m.w.shape[1];
    double ce = 0.0;
    std::vector<double> z(k);
    for (long i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= k) throw std::invalid_argument("probe_ce: label out of range");
        for (int c = 0; c < k; ++c) {
            double s = m.b[c];
            for (int j = 0; j < d; ++j)
                s += (static_cast<double>(features.v[static_cast<size_t>(i) * d + j]) - m.mu[j]) /
                     m.sigma[j] * m.w.v[static_cast<size_t>(j) * k + c];
            z[c] = s;
        }
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (int c = 0; c < k; ++c) sum += std::exp(z[c] - zmax);
        ce += -(z[labels[i]] - zmax - std::log(sum));
    }
    return ce / n;
}

GridCell select_layer_pooling(const std::vector<GridCell>& cells) {
    if (cells.empty()) throw std::invalid_argument("select_layer_pooling: empty grid");
    const GridCell* best = &cells[0];
    for (const auto& c : cells) {
        if (c.score > best->score ||
            (c.score == best->score &&
             (c.layer < best->layer || (c.layer == best->layer && c.pooling < best->pooling))))
            best = &c;
    }
    return *best;
}

}  // namespace coch::eval
