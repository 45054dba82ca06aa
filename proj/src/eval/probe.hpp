#pragma once
// Multinomial logistic-regression probe trained by full-batch gradient
// descent with Armijo backtracking on the convex objective
//   mean cross-entropy + l2_strength * ||W||^2 / 2   (bias unregularized).
// Features are standardized per dimension (z-score fit on the training set);
// the fitted shift/scale travel with the model so prediction applies them.

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace coch::eval {

struct ProbeConfig {
    double l2_strength = 1e-4;
    long max_iters = 500;
    double tol = 1e-6;       // stop when the full gradient L2 norm drops below
    double init_scale = 0.0;  // 0 = zero init; > 0 draws N(0, scale^2) weights
    uint64_t seed = 0;
    bool standardize = true;
};

struct ProbeModel {
    TensorF w;                         // [d, n_classes]
    std::vector<float> b;              // [n_classes]
    std::vector<float> mu, sigma;      // per-dimension standardization
    std::vector<std::string> classes;  // index -> label
    double final_objective = 0.0;
    long iters = 0;
};

// features [N, d]; labels in [0, classes.size()); needs >= 2 distinct labels
ProbeModel train_linear_probe(const TensorF& features, const std::vector<int>& labels,
                              const std::vector<std::string>& classes, const ProbeConfig& cfg);

std::vector<int> probe_predict(const ProbeModel& m, const TensorF& features);

// mean cross-entropy of the model on a labeled set (no regularization term)
double probe_ce(const ProbeModel& m, const TensorF& features, const std::vector<int>& labels);

// one cell of the layer x pooling selection grid; pooling uses the embedding
// order mean=0, max=1, min=2
struct GridCell {
    int layer = 0;
    int pooling = 0;
    double score = 0.0;
};

// argmax by score; exact ties prefer the lower layer, then the lower pooling
GridCell select_layer_pooling(const std::vector<GridCell>& cells);

}  // namespace coch::eval
