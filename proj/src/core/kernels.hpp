#pragma once
// Inner-loop kernels. Two shapes matter for throughput on one core:
//   - axpy-style accumulation with the k-loop unrolled by 4 (matmul forward)
//   - dot products with 16 independent accumulator lanes (matmul_nt, conv)
// Both let the compiler vectorize without -ffast-math; a naive single
// accumulator dot runs ~8x slower. Reductions that feed losses/metrics
// accumulate in double regardless of T.

#include <cmath>
#include <cstddef>

#include "core/parallel.hpp"

namespace coch::kern {

template <typename T>
inline void axpy(size_t n, T a, const T* x, T* y) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot(size_t n, const T* a, const T* b) {
    T acc[16] = {};
    size_t k = 0;
    for (; k + 16 <= n; k += 16)
        for (int j = 0; j < 16; ++j) acc[j] += a[k + j] * b[k + j];
    T s = 0;
    for (int j = 0; j < 16; ++j) s += acc[j];
    for (; k < n; ++k) s += a[k] * b[k];
    return s;
}

// C += A[M,K] * B[K,N]
template <typename T>
inline void matmul_acc(int M, int K, int N, const T* A, const T* B, T* C) {
    parallel_for(M, [&](int m0, int m1) {
        for (int m = m0; m < m1; ++m) {
            T* c = C + static_cast<size_t>(m) * N;
            const T* arow = A + static_cast<size_t>(m) * K;
            int k = 0;
            for (; k + 4 <= K; k += 4) {
                const T a0 = arow[k], a1 = arow[k + 1], a2 = arow[k + 2], a3 = arow[k + 3];
                const T* b0 = B + static_cast<size_t>(k) * N;
                const T* b1 = b0 + N;
                const T* b2 = b1 + N;
                const T* b3 = b2 + N;
                for (int n = 0; n < N; ++n) c[n] += a0 * b0[n] + a1 * b1[n] + a2 * b2[n] + a3 * b3[n];
            }
            for (; k < K; ++k) axpy(static_cast<size_t>(N), arow[k], B + static_cast<size_t>(k) * N, c);
        }
    });
}

// C += A[M,K] * B[N,K]^T  (i.e. C[m,n] += dot(A row m, B row n))
template <typename T>
inline void matmul_nt_acc(int M, int K, int N, const T* A, const T* B, T* C) {
    parallel_for(M, [&](int m0, int m1) {
        for (int m = m0; m < m1; ++m) {
            const T* arow = A + static_cast<size_t>(m) * K;
            T* c = C + static_cast<size_t>(m) * N;
            for (int n = 0; n < N; ++n) c[n] += dot(static_cast<size_t>(K), arow, B + static_cast<size_t>(n) * K);
        }
    });
}

// C += A[M,K]^T * B[M,N]  (used for weight gradients: dW += X^T * dY).
// Parallel split over k: each worker owns a disjoint band of C rows.
template <typename T>
inline void matmul_tn_acc(int M, int K, int N, const T* A, const T* B, T* C) {
    parallel_for(K, [&](int k0, int k1) {
        for (int m = 0; m < M; ++m) {
            const T* arow = A + static_cast<size_t>(m) * K;
            const T* brow = B + static_cast<size_t>(m) * N;
            for (int k = k0; k < k1; ++k)
                if (arow[k] != T(0)) axpy(static_cast<size_t>(N), arow[k], brow, C + static_cast<size_t>(k) * N);
        }
    }, 16);
}

// Causal 1-D convolution over a [T,Cin] row-major sequence.
// Weights are [Cout, K*Cin] with tap index j = 0 the OLDEST frame, so for
// t >= K-1 the input window x[t-K+1 .. t] is one contiguous block and the
// whole output element is a single long dot product.
template <typename T>
inline void conv1d_causal(int Tn, int Cin, int Cout, int K, const T* x, const T* w, const T* b, T* out) {
    parallel_for(Tn, [&](int t0, int t1) {
        for (int t = t0; t < t1; ++t) {
            T* orow = out + static_cast<size_t>(t) * Cout;
            const int valid = std::min(K, t + 1);          // taps with in-range inputs
            const size_t len = static_cast<size_t>(valid) * Cin;
            const size_t woff = static_cast<size_t>(K - valid) * Cin;
            const T* xwin = x + static_cast<size_t>(t - valid + 1) * Cin;
            for (int co = 0; co < Cout; ++co)
                orow[co] = (b ? b[co] : T(0)) + dot(len, xwin, w + static_cast<size_t>(co) * K * Cin + woff);
        }
    });
}

template <typename T>
inline void conv1d_causal_bwd_x(int Tn, int Cin, int Cout, int K, const T* w, const T* dout, T* dx) {
    for (int t = 0; t < Tn; ++t) {  // overlapping windows: keep sequential
        const T* drow = dout + static_cast<size_t>(t) * Cout;
        const int valid = std::min(K, t + 1);
        const size_t len = static_cast<size_t>(valid) * Cin;
        const size_t woff = static_cast<size_t>(K - valid) * Cin;
        T* dxwin = dx + static_cast<size_t>(t - valid + 1) * Cin;
        for (int co = 0; co < Cout; ++co)
            if (drow[co] != T(0)) axpy(len, drow[co], w + static_cast<size_t>(co) * K * Cin + woff, dxwin);
    }
}

template <typename T>
inline void conv1d_causal_bwd_w(int Tn, int Cin, int Cout, int K, const T* x, const T* dout, T* dw, T* db) {
    parallel_for(Cout, [&](int c0, int c1) {
        for (int co = c0; co < c1; ++co) {
            T* dwrow = dw + static_cast<size_t>(co) * K * Cin;
            double bacc = 0.0;
            for (int t = 0; t < Tn; ++t) {
                const T g = dout[static_cast<size_t>(t) * Cout + co];
                if (g == T(0)) continue;
                bacc += static_cast<double>(g);
                const int valid = std::min(K, t + 1);
                axpy(static_cast<size_t>(valid) * Cin, g,
                     x + static_cast<size_t>(t - valid + 1) * Cin,
                     dwrow + static_cast<size_t>(K - valid) * Cin);
            }
            if (db) db[co] += static_cast<T>(bacc);
        }
    }, 4);
}

template <typename T>
inline double sum_d(size_t n, const T* a) {
    double acc[8] = {};
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) acc[j] += static_cast<double>(a[i + j]);
    double s = 0;
    for (int j = 0; j < 8; ++j) s += acc[j];
    for (; i < n; ++i) s += static_cast<double>(a[i]);
    return s;
}

// softmax over one row, numerically stable, double accumulation
template <typename T>
inline void softmax_row(size_t n, const T* z, T* y) {
    T zmax = z[0];
    for (size_t i = 1; i < n; ++i) zmax = std::max(zmax, z[i]);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double e = std::exp(static_cast<double>(z[i] - zmax));
        y[i] = static_cast<T>(e);
        total += e;
    }
    const double inv = 1.0 / total;
    for (size_t i = 0; i < n; ++i) y[i] = static_cast<T>(static_cast<double>(y[i]) * inv);
}

// log(sum(exp(z))) over one row, stable
template <typename T>
inline double logsumexp_row(size_t n, const T* z) {
    T zmax = z[0];
    for (size_t i = 1; i < n; ++i) zmax = std::max(zmax, z[i]);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) total += std::exp(static_cast<double>(z[i] - zmax));
    return static_cast<double>(zmax) + std::log(total);
}

}  // namespace coch::kern
