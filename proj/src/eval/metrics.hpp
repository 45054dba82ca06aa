#pragma once
// Quantitative evaluation primitives: rank correlation, accuracy variants,
// confusion matrices, cosine distances, and codebook cluster purity. All of
// these are pure functions over plain vectors; dataset plumbing lives in
// eval/dataset.hpp and classifier training in eval/probe.hpp.

#include <string>
#include <vector>

namespace coch::eval {

// average ranks in [1, n]; ties share the mean of the ranks they occupy
std::vector<double> average_ranks(const std::vector<double>& x);

// throws when either input has zero variance (correlation undefined)
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// tie-aware Spearman rho: Pearson on average ranks
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// 1 - cosine similarity; throws on zero-norm input
double cosine_distance(const std::vector<float>& a, const std::vector<float>& b);

// 100 * spearman(-distance, human score): positive when smaller model
// distance tracks higher judged similarity
double ssimi_score(const std::vector<double>& distances, const std::vector<double>& human_scores);

double plain_accuracy(const std::vector<int>& preds, const std::vector<int>& labels);
// support-weighted mean of per-class recall; identical to plain accuracy,
// emitted separately so reports carry both readings of "weighted"
double weighted_accuracy(const std::vector<int>& preds, const std::vector<int>& labels);
// unweighted mean of per-class recall over the classes present in labels
double balanced_accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// row-major [k, k]; rows = true class, columns = predicted
std::vector<long> confusion_matrix(const std::vector<int>& preds, const std::vector<int>& labels, int k);

// 8-bit PGM rendering, optionally log-scaled (log1p of counts)
void save_confusion_pgm(const std::string& path, const std::vector<long>& counts, int k, bool log_scale);

struct PurityResult {
    std::vector<long> counts;    // frames observed per token id
    std::vector<double> per_id;  // max-label fraction per id; 0 when unseen
    double mean = 0.0;           // count-weighted mean over seen ids
};

// purity of token id i = (count of its most associated label) / (its total count)
PurityResult token_purity(const std::vector<int>& token_ids, const std::vector<int>& label_ids,
                          int vocab, int n_labels);

}  // namespace coch::eval
