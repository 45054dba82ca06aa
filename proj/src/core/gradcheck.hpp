#pragma once
// Central-difference gradient verification, always in f64. The loss builder
// is invoked on a fresh graph per evaluation; leaves are created from the
// supplied points in order. For large tensors a seeded subset of coordinates
// can be probed instead of every one.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "core/graph.hpp"
#include "core/random.hpp"
#include "core/tensor.hpp"

namespace coch {

// builder: given the graph and leaf node ids (one per point, requires_grad),
// returns the scalar loss node.
using LossBuilder = std::function<int(GraphD&, const std::vector<int>&)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    size_t coords_checked = 0;
};

// abs_floor: coordinates where |analytic - numeric| < abs_floor count as
// agreeing regardless of relative error. 0 keeps the pure relative formula;
// a small floor (~1e-9) makes sampled checks robust at exactly-zero gradients
// (dead ReLU units) where finite differences only produce rounding noise.
inline GradCheckResult grad_check(const LossBuilder& build, std::vector<TensorD> points,
                                  double eps = 1e-5, size_t max_coords_per_tensor = 0,
                                  uint64_t seed = 0, double abs_floor = 0.0) {
    auto eval = [&](const std::vector<TensorD>& pts, std::vector<TensorD>* grads_out) {
        GraphD g;
        std::vector<int> ids;
        ids.reserve(pts.size());
        for (const auto& p : pts) ids.push_back(g.leaf(p, true));
        const int loss = build(g, ids);
        const double l = g.scalar(loss);
        if (!std::isfinite(l)) throw std::runtime_error("grad_check: non-finite loss");
        if (grads_out) {
            g.backward(loss);
            grads_out->clear();
            for (int id : ids) grads_out->push_back(g.grad_tensor(id));
        }
        return l;
    };

    std::vector<TensorD> analytic;
    eval(points, &analytic);

    GradCheckResult res;
    RandomSource rng(seed);
    for (size_t pi = 0; pi < points.size(); ++pi) {
        const size_t n = points[pi].size();
        std::vector<size_t> coords;
        if (max_coords_per_tensor == 0 || n <= max_coords_per_tensor) {
            coords.resize(n);
            for (size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (size_t i = 0; i < max_coords_per_tensor; ++i)
                coords.push_back(static_cast<size_t>(rng.below(n)));
        }
        for (size_t ci : coords) {
            const double orig = points[pi].v[ci];
            points[pi].v[ci] = orig + eps;
            const double lp = eval(points, nullptr);
            points[pi].v[ci] = orig - eps;
            const double lm = eval(points, nullptr);
            points[pi].v[ci] = orig;
            const double num = (lp - lm) / (2.0 * eps);
            const double ana = analytic[pi].v[ci];
            if (!std::isfinite(num) || !std::isfinite(ana))
                throw std::runtime_error("grad_check: non-finite gradient");
            const double abs_err = std::fabs(num - ana);
            res.max_abs_err = std::max(res.max_abs_err, abs_err);
            if (abs_err >= abs_floor) {
                const double rel = abs_err / std::max({std::fabs(num), std::fabs(ana), 1e-12});
                res.max_rel_err = std::max(res.max_rel_err, rel);
            }
            ++res.coords_checked;
        }
    }
    return res;
}

}  // namespace coch
