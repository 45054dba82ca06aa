#pragma once
// Deterministic data parallelism: work is split over disjoint output ranges,
// each element computed exactly as in the sequential path, so results are
// bit-identical for any worker count. Default is single-threaded; the
// COCHSTREAM_THREADS environment variable raises the bound.

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace coch {

inline int max_threads() {
    static const int n = [] {
        if (const char* env = std::getenv("COCHSTREAM_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return std::min(v, 256);
        }
        return 1;
    }();
    return n;
}

// fn(i0, i1) handles output rows [i0, i1)
inline void parallel_for(int n, const std::function<void(int, int)>& fn, int min_grain = 64) {
    const int workers = std::min(max_threads(), std::max(1, n / std::max(1, min_grain)));
    if (workers <= 1 || n <= 0) {
        if (n > 0) fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int i0 = w * chunk, i1 = std::min(n, i0 + chunk);
        if (i0 >= i1) break;
        pool.emplace_back(fn, i0, i1);
    }
    for (auto& t : pool) t.join();
}

}  // namespace coch
