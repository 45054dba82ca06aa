#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "util/io.hpp"

namespace coch::eval {

std::vector<double> average_ranks(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });

    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double shared = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: zero-variance input, correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("spearman: need at least 2 points");
    return pearson(average_ranks(x), average_ranks(y));
}

double cosine_distance(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_distance: length mismatch");
    if (a.empty()) throw std::invalid_argument("cosine_distance: empty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_distance: zero-norm vector");
    return 1.0 - dot / std::sqrt(na * nb);
}

double ssimi_score(const std::vector<double>& distances, const std::vector<double>& human_scores) {
    std::vector<double> neg(distances.size());
    for (size_t i = 0; i < distances.size(); ++i) neg[i] = -distances[i];
    return 100.0 * spearman(neg, human_scores);
}

namespace {

void check_paired(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
}

}  // namespace

double plain_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    check_paired(preds, labels);
    long hit = 0;
    for (size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i];
    return static_cast<double>(hit) / preds.size();
}

double weighted_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    check_paired(preds, labels);
    // support-weighted recall: sum_c (n_c/N) * (hit_c/n_c) = sum_c hit_c / N,
    // algebraically plain accuracy; computed the long way as a cross-check
    const int k = 1 + *std::max_element(labels.begin(), labels.end());
    std::vector<long> support(k, 0), hits(k, 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        ++support[labels[i]];
        hits[labels[i]] += preds[i] == labels[i];
    }
    double acc = 0.0;
    for (int c = 0; c < k; ++c)
        if (support[c] > 0)
            acc += (static_cast<double>(support[c]) / labels.size()) *
                   (static_cast<double>(hits[c]) / support[c]);
    return acc;
}

double balanced_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    check_paired(preds, labels);
    const int k = 1 + *std::max_element(labels.begin(), labels.end());
    std::vector<long> support(k, 0), hits(k, 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        ++support[labels[i]];
        hits[labels[i]] += preds[i] == labels[i];
    }
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < k; ++c)
        if (support[c] > 0) {
            sum += static_cast<double>(hits[c]) / support[c];
            ++present;
        }
    return sum / present;
}

std::vector<long> confusion_matrix(const std::vector<int>& preds, const std::vector<int>& labels, int k) {
    check_paired(preds, labels);
    if (k < 1) throw std::invalid_argument("confusion_matrix: k must be >= 1");
    std::vector<long> m(static_cast<size_t>(k) * k, 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k || preds[i] < 0 || preds[i] >= k)
            throw std::invalid_argument("confusion_matrix: class index out of range");
        ++m[static_cast<size_t>(labels[i]) * k + preds[i]];
    }
    return m;
}

void save_confusion_pgm(const std::string& path, const std::vector<long>& counts, int k, bool log_scale) {
    if (counts.size() != static_cast<size_t>(k) * k)
        throw std::invalid_argument("save_confusion_pgm: counts size does not match k");
    std::vector<double> v(counts.size());
    double mx = 0.0;
    for (size_t i = 0; i < counts.size(); ++i) {
        v[i] = log_scale ? std::log1p(static_cast<double>(counts[i])) : static_cast<double>(counts[i]);
        mx = std::max(mx, v[i]);
    }
    std::vector<uint8_t> px(counts.size(), 0);
    if (mx > 0.0)
        for (size_t i = 0; i < counts.size(); ++i)
            px[i] = static_cast<uint8_t>(std::lround(255.0 * v[i] / mx));
    write_pgm(path, k, k, px);
}

PurityResult token_purity(const std::vector<int>& token_ids, const std::vector<int>& label_ids,
                          int vocab, int n_labels) {
    if (token_ids.size() != label_ids.size()) throw std::invalid_argument("token_purity: length mismatch");
    if (token_ids.empty()) throw std::invalid_argument("token_purity: no aligned frames");
    if (vocab < 1 || n_labels < 1) throw std::invalid_argument("token_purity: bad vocab or label count");

    std::vector<long> table(static_cast<size_t>(vocab) * n_labels, 0);
    for (size_t i = 0; i < token_ids.size(); ++i) {
        if (token_ids[i] < 0 || token_ids[i] >= vocab)
            throw std::invalid_argument("token_purity: token id out of range");
        if (label_ids[i] < 0 || label_ids[i] >= n_labels)
            throw std::invalid_argument("token_purity: label id out of range");
        ++table[static_cast<size_t>(token_ids[i]) * n_labels + label_ids[i]];
    }

    PurityResult r;
    r.counts.assign(vocab, 0);
    r.per_id.assign(vocab, 0.0);
    double weighted = 0.0;
    for (int id = 0; id < vocab; ++id) {
        long total = 0, best = 0;
        for (int c = 0; c < n_labels; ++c) {
            const long n = table[static_cast<size_t>(id) * n_labels + c];
            total += n;
            best = std::max(best, n);
        }
        r.counts[id] = total;
        if (total > 0) {
            r.per_id[id] = static_cast<double>(best) / total;
            weighted += static_cast<double>(best);
        }
    }
    r.mean = weighted / token_ids.size();
    return r;
}

}  // namespace coch::eval
