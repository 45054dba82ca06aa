#pragma once
// Reverse-mode autodiff on a flat tape. Define-by-run: each builder computes
// its value eagerly, backward() walks the tape in reverse (tape order IS a
// topological order). Templated on the scalar so the same graph code runs in
// f32 for training and f64 for finite-difference verification. Gradients are
// allocated lazily and only propagated into inputs that require grad, so
// fixed kernels (DFT matrices, masks) cost nothing in backward.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "core/kernels.hpp"
#include "core/tensor.hpp"

namespace coch {

template <typename T>
class Graph {
public:
    enum class Op : uint8_t {
        Leaf, Add, Sub, Mul, Scale, AddConst, Neg,
        Relu, Silu, Sigmoid, Exp, Log, Pow, Clamp, Magnitude,
        MatMul, MatMulNT, Conv1d,
        FrameSignal, EmbedRows, TakeRows, SliceCols, ConcatCols, ConcatRows,
        SoftmaxRows, CrossEntropyMean, RmsNorm, SignSTE,
        Sum, Mean, MeanAxis0,
    };

    struct Node {
        Op op = Op::Leaf;
        bool requires_grad = false;
        Shape shape;
        std::vector<int> in;
        std::vector<T> val;
        std::vector<T> grad;  // sized on first touch
        std::vector<T> aux;   // op-specific cache for backward
        std::vector<int> idx; // embedding ids / CE targets
        int p0 = 0, p1 = 0, p2 = 0;
        double s0 = 0.0, s1 = 0.0;
    };

    int leaf(const Tensor<T>& t, bool requires_grad = false) {
        return push(Op::Leaf, {}, t.shape, std::vector<T>(t.v), requires_grad);
    }
    int leaf(Shape shape, std::vector<T> vals, bool requires_grad = false) {
        if (vals.size() != numel(shape)) throw std::invalid_argument("leaf value count mismatch");
        return push(Op::Leaf, {}, std::move(shape), std::move(vals), requires_grad);
    }

    // ---- elementwise binary (b may be same-shape, scalar, or a row vector
    //      whose length equals a's column count) ----
    int add(int a, int b) { return ew2(Op::Add, a, b); }
    int sub(int a, int b) { return ew2(Op::Sub, a, b); }
    int mul(int a, int b) { return ew2(Op::Mul, a, b); }

    int scale(int a, double c) { return ew1(Op::Scale, a, c); }
    int add_const(int a, double c) { return ew1(Op::AddConst, a, c); }
    int neg(int a) { return ew1(Op::Neg, a); }
    int relu(int a) { return ew1(Op::Relu, a); }
    int silu(int a) { return ew1(Op::Silu, a); }
    int sigmoid(int a) { return ew1(Op::Sigmoid, a); }
    int exp_(int a) { return ew1(Op::Exp, a); }
    int log_(int a) { return ew1(Op::Log, a); }
    int pow_(int a, double p) { return ew1(Op::Pow, a, p); }
    int clamp(int a, double lo, double hi) { return ew1(Op::Clamp, a, lo, hi); }
    int sign_ste(int a) { return ew1(Op::SignSTE, a); }

    int magnitude(int re, int im) {
        check_same(re, im, "magnitude");
        std::vector<T> v(node(re).val.size());
        const auto& R = node(re).val;
        const auto& I = node(im).val;
        for (size_t i = 0; i < v.size(); ++i)
            v[i] = static_cast<T>(std::sqrt(double(R[i]) * R[i] + double(I[i]) * I[i]));
        return push(Op::Magnitude, {re, im}, node(re).shape, std::move(v));
    }

    // ---- linear algebra ----
    int matmul(int a, int b) {
        require_rank2(a, "matmul lhs");
        require_rank2(b, "matmul rhs");
        const int M = node(a).shape[0], K = node(a).shape[1];
        if (node(b).shape[0] != K)
            throw std::invalid_argument("matmul inner dims: " + shape_str(node(a).shape) + " x " + shape_str(node(b).shape));
        const int N = node(b).shape[1];
        std::vector<T> v(static_cast<size_t>(M) * N, T(0));
        kern::matmul_acc(M, K, N, node(a).val.data(), node(b).val.data(), v.data());
        return push(Op::MatMul, {a, b}, {M, N}, std::move(v));
    }

    // a[M,K] * b[N,K]^T
    int matmul_nt(int a, int b) {
        require_rank2(a, "matmul_nt lhs");
        require_rank2(b, "matmul_nt rhs");
        const int M = node(a).shape[0], K = node(a).shape[1];
        if (node(b).shape[1] != K)
            throw std::invalid_argument("matmul_nt inner dims: " + shape_str(node(a).shape) + " x " + shape_str(node(b).shape) + "^T");
        const int N = node(b).shape[0];
        std::vector<T> v(static_cast<size_t>(M) * N, T(0));
        kern::matmul_nt_acc(M, K, N, node(a).val.data(), node(b).val.data(), v.data());
        return push(Op::MatMulNT, {a, b}, {M, N}, std::move(v));
    }

    // x [T,Cin], w [Cout, K*Cin] (tap 0 oldest), optional bias [Cout]
    int conv1d(int x, int w, int b, int k, int cin, int cout) {
        require_rank2(x, "conv1d input");
        if (node(x).shape[1] != cin) throw std::invalid_argument("conv1d: input cols != cin");
        if (static_cast<size_t>(cout) * k * cin != node(w).val.size())
            throw std::invalid_argument("conv1d: weight size != cout*k*cin");
        if (b >= 0 && node(b).val.size() != static_cast<size_t>(cout))
            throw std::invalid_argument("conv1d: bias size != cout");
        const int Tn = node(x).shape[0];
        std::vector<T> v(static_cast<size_t>(Tn) * cout);
        kern::conv1d_causal(Tn, cin, cout, k, node(x).val.data(), node(w).val.data(),
                            b >= 0 ? node(b).val.data() : nullptr, v.data());
        std::vector<int> in = {x, w};
        if (b >= 0) in.push_back(b);
        int id = push(Op::Conv1d, std::move(in), {Tn, cout}, std::move(v));
        node(id).p0 = k;
        node(id).p1 = cin;
        node(id).p2 = cout;
        return id;
    }

    // ---- structure ----
    int frame_signal(int x, int win, int hop) {
        if (node(x).shape.size() != 1) throw std::invalid_argument("frame_signal input must be rank 1");
        const int N = node(x).shape[0];
        if (N < win) throw std::invalid_argument("frame_signal: signal shorter than window");
        if (hop < 1 || win < 1) throw std::invalid_argument("frame_signal: bad window/hop");
        const int Tn = (N - win) / hop + 1;
        std::vector<T> v(static_cast<size_t>(Tn) * win);
        const T* src = node(x).val.data();
        for (int t = 0; t < Tn; ++t)
            std::copy_n(src + static_cast<size_t>(t) * hop, win, v.data() + static_cast<size_t>(t) * win);
        int id = push(Op::FrameSignal, {x}, {Tn, win}, std::move(v));
        node(id).p0 = win;
        node(id).p1 = hop;
        return id;
    }

    int embed_rows(int table, std::vector<int> ids) {
        require_rank2(table, "embed_rows table");
        const int V = node(table).shape[0], d = node(table).shape[1];
        for (int id : ids)
            if (id < 0 || id >= V) throw std::invalid_argument("embed_rows: id out of range");
        const int n = static_cast<int>(ids.size());
        std::vector<T> v(static_cast<size_t>(n) * d);
        for (int i = 0; i < n; ++i)
            std::copy_n(node(table).val.data() + static_cast<size_t>(ids[i]) * d, d,
                        v.data() + static_cast<size_t>(i) * d);
        int id = push(Op::EmbedRows, {table}, {n, d}, std::move(v));
        node(id).idx = std::move(ids);
        return id;
    }

    int take_rows(int x, int r0, int r1) {
        require_rank2(x, "take_rows");
        const int R = node(x).shape[0], C = node(x).shape[1];
        if (r0 < 0 || r1 > R || r0 >= r1) throw std::invalid_argument("take_rows: bad row range");
        std::vector<T> v(node(x).val.begin() + static_cast<size_t>(r0) * C,
                         node(x).val.begin() + static_cast<size_t>(r1) * C);
        int id = push(Op::TakeRows, {x}, {r1 - r0, C}, std::move(v));
        node(id).p0 = r0;
        node(id).p1 = r1;
        return id;
    }

    int slice_cols(int x, int c0, int c1) {
        require_rank2(x, "slice_cols");
        const int R = node(x).shape[0], C = node(x).shape[1];
        if (c0 < 0 || c1 > C || c0 >= c1) throw std::invalid_argument("slice_cols: bad col range");
        const int W = c1 - c0;
        std::vector<T> v(static_cast<size_t>(R) * W);
        for (int r = 0; r < R; ++r)
            std::copy_n(node(x).val.data() + static_cast<size_t>(r) * C + c0, W,
                        v.data() + static_cast<size_t>(r) * W);
        int id = push(Op::SliceCols, {x}, {R, W}, std::move(v));
        node(id).p0 = c0;
        node(id).p1 = c1;
        return id;
    }

    int concat_cols(const std::vector<int>& xs) {
        if (xs.empty()) throw std::invalid_argument("concat_cols: no inputs");
        const int R = node(xs[0]).shape[0];
        int C = 0;
        for (int x : xs) {
            require_rank2(x, "concat_cols");
            if (node(x).shape[0] != R) throw std::invalid_argument("concat_cols: row mismatch");
            C += node(x).shape[1];
        }
        std::vector<T> v(static_cast<size_t>(R) * C);
        int off = 0;
        for (int x : xs) {
            const int W = node(x).shape[1];
            for (int r = 0; r < R; ++r)
                std::copy_n(node(x).val.data() + static_cast<size_t>(r) * W, W,
                            v.data() + static_cast<size_t>(r) * C + off);
            off += W;
        }
        return push(Op::ConcatCols, xs, {R, C}, std::move(v));
    }

    int concat_rows(const std::vector<int>& xs) {
        if (xs.empty()) throw std::invalid_argument("concat_rows: no inputs");
        const int C = node(xs[0]).shape.size() == 2 ? node(xs[0]).shape[1] : 1;
        int R = 0;
        for (int x : xs) {
            require_rank2(x, "concat_rows");
            if (node(x).shape[1] != C) throw std::invalid_argument("concat_rows: col mismatch");
            R += node(x).shape[0];
        }
        std::vector<T> v;
        v.reserve(static_cast<size_t>(R) * C);
        for (int x : xs) v.insert(v.end(), node(x).val.begin(), node(x).val.end());
        return push(Op::ConcatRows, xs, {R, C}, std::move(v));
    }

    // ---- nn ----
    int softmax_rows(int x) {
        require_rank2(x, "softmax_rows");
        const int R = node(x).shape[0], C = node(x).shape[1];
        std::vector<T> v(static_cast<size_t>(R) * C);
        for (int r = 0; r < R; ++r)
            kern::softmax_row(static_cast<size_t>(C), node(x).val.data() + static_cast<size_t>(r) * C,
                              v.data() + static_cast<size_t>(r) * C);
        return push(Op::SoftmaxRows, {x}, {R, C}, std::move(v));
    }

    // mean over rows of -log softmax(logits)[target]; caches probs for backward
    int cross_entropy_mean(int logits, std::vector<int> targets) {
        require_rank2(logits, "cross_entropy logits");
        const int R = node(logits).shape[0], C = node(logits).shape[1];
        if (static_cast<int>(targets.size()) != R)
            throw std::invalid_argument("cross_entropy: target count != rows");
        for (int t : targets)
            if (t < 0 || t >= C) throw std::invalid_argument("cross_entropy: target out of range");
        std::vector<T> probs(static_cast<size_t>(R) * C);
        double total = 0.0;
        for (int r = 0; r < R; ++r) {
            const T* z = node(logits).val.data() + static_cast<size_t>(r) * C;
            T* p = probs.data() + static_cast<size_t>(r) * C;
            kern::softmax_row(static_cast<size_t>(C), z, p);
            total += kern::logsumexp_row(static_cast<size_t>(C), z) - static_cast<double>(z[targets[r]]);
        }
        int id = push(Op::CrossEntropyMean, {logits}, {1}, {static_cast<T>(total / R)});
        node(id).idx = std::move(targets);
        node(id).aux = std::move(probs);
        return id;
    }

    // y[r,c] = x[r,c] * gain[c] / sqrt(mean_c(x[r,:]^2) + eps)
    int rmsnorm(int x, int gain, double eps) {
        require_rank2(x, "rmsnorm");
        const int R = node(x).shape[0], C = node(x).shape[1];
        if (node(gain).val.size() != static_cast<size_t>(C))
            throw std::invalid_argument("rmsnorm: gain length != cols");
        std::vector<T> v(static_cast<size_t>(R) * C);
        std::vector<T> inv_rms(R);
        for (int r = 0; r < R; ++r) {
            const T* xr = node(x).val.data() + static_cast<size_t>(r) * C;
            double ss = 0.0;
            for (int c = 0; c < C; ++c) ss += double(xr[c]) * xr[c];
            const double rr = 1.0 / std::sqrt(ss / C + eps);
            inv_rms[r] = static_cast<T>(rr);
            T* yr = v.data() + static_cast<size_t>(r) * C;
            const T* g = node(gain).val.data();
            for (int c = 0; c < C; ++c) yr[c] = static_cast<T>(double(xr[c]) * g[c] * rr);
        }
        int id = push(Op::RmsNorm, {x, gain}, {R, C}, std::move(v));
        node(id).s0 = eps;
        node(id).aux = std::move(inv_rms);
        return id;
    }

    // ---- reductions ----
    int sum(int a) { return reduce(Op::Sum, a); }
    int mean(int a) { return reduce(Op::Mean, a); }

    int mean_axis0(int a) {
        require_rank2(a, "mean_axis0");
        const int R = node(a).shape[0], C = node(a).shape[1];
        std::vector<double> acc(C, 0.0);
        for (int r = 0; r < R; ++r) {
            const T* xr = node(a).val.data() + static_cast<size_t>(r) * C;
            for (int c = 0; c < C; ++c) acc[c] += static_cast<double>(xr[c]);
        }
        std::vector<T> v(C);
        for (int c = 0; c < C; ++c) v[c] = static_cast<T>(acc[c] / R);
        return push(Op::MeanAxis0, {a}, {C}, std::move(v));
    }

    // ---- engine ----
    void backward(int loss) {
        if (node(loss).val.size() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(node(loss).shape));
        ensure_grad(loss);
        node(loss).grad[0] = T(1);
        for (int i = loss; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.op == Op::Leaf || n.grad.empty()) continue;
            backward_node(i);
        }
    }

    std::span<const T> val(int i) const { return {node(i).val.data(), node(i).val.size()}; }
    std::span<const T> grad(int i) const {
        static const std::vector<T> empty;
        const auto& g = node(i).grad;
        return g.empty() ? std::span<const T>{empty.data(), size_t(0)} : std::span<const T>{g.data(), g.size()};
    }
    // gradient as a tensor, zeros if the node was never touched by backward
    Tensor<T> grad_tensor(int i) const {
        Tensor<T> out(node(i).shape);
        if (!node(i).grad.empty()) out.v = node(i).grad;
        return out;
    }
    const Shape& shape(int i) const { return node(i).shape; }
    T scalar(int i) const {
        if (node(i).val.size() != 1) throw std::invalid_argument("scalar(): node is not scalar");
        return node(i).val[0];
    }
    bool requires_grad(int i) const { return node(i).requires_grad; }
    size_t node_count() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    std::vector<Node> nodes_;

    Node& node(int i) { return nodes_.at(i); }
    const Node& node(int i) const { return nodes_.at(i); }

    void require_rank2(int x, const char* what) const {
        if (node(x).shape.size() != 2) throw std::invalid_argument(std::string(what) + " must be rank 2");
    }
    void check_same(int a, int b, const char* what) const {
        if (!same_shape(node(a).shape, node(b).shape))
            throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(node(a).shape) + " vs " + shape_str(node(b).shape));
    }

    int push(Op op, std::vector<int> in, Shape shape, std::vector<T> val, bool rg_leaf = false) {
        Node n;
        n.op = op;
        n.in = std::move(in);
        n.shape = std::move(shape);
        n.val = std::move(val);
        n.requires_grad = op == Op::Leaf ? rg_leaf : false;
        for (int i : n.in) n.requires_grad = n.requires_grad || node(i).requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    void ensure_grad(int i) {
        if (node(i).grad.empty()) node(i).grad.assign(node(i).val.size(), T(0));
    }

    // broadcast kind for elementwise binary ops
    enum class Bc { Same, Scalar, RowVec };
    Bc bc_kind(int a, int b, const char* what) const {
        if (same_shape(node(a).shape, node(b).shape)) return Bc::Same;
        if (node(b).val.size() == 1) return Bc::Scalar;
        if (node(b).shape.size() == 1 && node(a).shape.size() == 2 &&
            node(b).shape[0] == node(a).shape[1])
            return Bc::RowVec;
        throw std::invalid_argument(std::string(what) + ": incompatible shapes " + shape_str(node(a).shape) + " vs " + shape_str(node(b).shape));
    }

    int ew2(Op op, int a, int b) {
        const char* name = op == Op::Add ? "add" : op == Op::Sub ? "sub" : "mul";
        const Bc bc = bc_kind(a, b, name);
        const auto& A = node(a).val;
        const auto& B = node(b).val;
        std::vector<T> v(A.size());
        const int C = cols_of(node(a).shape);
        for (size_t i = 0; i < A.size(); ++i) {
            const T bb = bc == Bc::Same ? B[i] : bc == Bc::Scalar ? B[0] : B[i % C];
            v[i] = op == Op::Add ? A[i] + bb : op == Op::Sub ? A[i] - bb : A[i] * bb;
        }
        return push(op, {a, b}, node(a).shape, std::move(v));
    }

    int ew1(Op op, int a, double s0 = 0.0, double s1 = 0.0) {
        const auto& A = node(a).val;
        std::vector<T> v(A.size());
        for (size_t i = 0; i < A.size(); ++i) v[i] = ew1_val(op, A[i], s0, s1);
        int id = push(op, {a}, node(a).shape, std::move(v));
        node(id).s0 = s0;
        node(id).s1 = s1;
        return id;
    }

    static T ew1_val(Op op, T x, double s0, double s1) {
        const double xd = static_cast<double>(x);
        switch (op) {
            case Op::Scale: return static_cast<T>(xd * s0);
            case Op::AddConst: return static_cast<T>(xd + s0);
            case Op::Neg: return -x;
            case Op::Relu: return x > T(0) ? x : T(0);
            case Op::Silu: return static_cast<T>(xd / (1.0 + std::exp(-xd)));
            case Op::Sigmoid: return static_cast<T>(1.0 / (1.0 + std::exp(-xd)));
            case Op::Exp: return static_cast<T>(std::exp(xd));
            case Op::Log: return static_cast<T>(std::log(xd));
            case Op::Pow: return static_cast<T>(std::pow(xd, s0));
            case Op::Clamp: return static_cast<T>(std::min(std::max(xd, s0), s1));
            case Op::SignSTE: return x > T(0) ? T(1) : T(-1);
            default: throw std::logic_error("ew1_val: not a unary op");
        }
    }

    int reduce(Op op, int a) {
        const double s = kern::sum_d(node(a).val.size(), node(a).val.data());
        const double v = op == Op::Sum ? s : s / static_cast<double>(node(a).val.size());
        return push(op, {a}, {1}, {static_cast<T>(v)});
    }

    void acc_into(int input, const std::vector<T>& contrib) {
        if (!node(input).requires_grad) return;
        ensure_grad(input);
        auto& g = node(input).grad;
        for (size_t i = 0; i < g.size(); ++i) g[i] += contrib[i];
    }

    void backward_node(int id) {
        Node& n = nodes_[id];
        const auto& g = n.grad;
        switch (n.op) {
            case Op::Add:
            case Op::Sub: {
                const T sgn = n.op == Op::Add ? T(1) : T(-1);
                if (node(n.in[0]).requires_grad) {
                    ensure_grad(n.in[0]);
                    auto& ga = node(n.in[0]).grad;
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                }
                if (node(n.in[1]).requires_grad) {
                    ensure_grad(n.in[1]);
                    auto& gb = node(n.in[1]).grad;
                    const Bc bc = bc_kind(n.in[0], n.in[1], "add/sub bwd");
                    const int C = cols_of(n.shape);
                    if (bc == Bc::Same) {
                        for (size_t i = 0; i < g.size(); ++i) gb[i] += sgn * g[i];
                    } else if (bc == Bc::Scalar) {
                        gb[0] += sgn * static_cast<T>(kern::sum_d(g.size(), g.data()));
                    } else {
                        for (size_t i = 0; i < g.size(); ++i) gb[i % C] += sgn * g[i];
                    }
                }
                break;
            }
            case Op::Mul: {
                const auto& A = node(n.in[0]).val;
                const auto& B = node(n.in[1]).val;
                const Bc bc = bc_kind(n.in[0], n.in[1], "mul bwd");
                const int C = cols_of(n.shape);
                if (node(n.in[0]).requires_grad) {
                    ensure_grad(n.in[0]);
                    auto& ga = node(n.in[0]).grad;
                    for (size_t i = 0; i < g.size(); ++i) {
                        const T bb = bc == Bc::Same ? B[i] : bc == Bc::Scalar ? B[0] : B[i % C];
                        ga[i] += g[i] * bb;
                    }
                }
                if (node(n.in[1]).requires_grad) {
                    ensure_grad(n.in[1]);
                    auto& gb = node(n.in[1]).grad;
                    if (bc == Bc::Same) {
                        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
                    } else if (bc == Bc::Scalar) {
                        double acc = 0.0;
                        for (size_t i = 0; i < g.size(); ++i) acc += double(g[i]) * A[i];
                        gb[0] += static_cast<T>(acc);
                    } else {
                        for (size_t i = 0; i < g.size(); ++i) gb[i % C] += g[i] * A[i];
                    }
                }
                break;
            }
            case Op::Scale: case Op::AddConst: case Op::Neg: case Op::Relu:
            case Op::Silu: case Op::Sigmoid: case Op::Exp: case Op::Log:
            case Op::Pow: case Op::Clamp: case Op::SignSTE: {
                if (!node(n.in[0]).requires_grad) break;
                ensure_grad(n.in[0]);
                auto& ga = node(n.in[0]).grad;
                const auto& X = node(n.in[0]).val;
                const auto& Y = n.val;
                for (size_t i = 0; i < g.size(); ++i)
                    ga[i] += g[i] * ew1_deriv(n.op, X[i], Y[i], n.s0, n.s1);
                break;
            }
            case Op::Magnitude: {
                const auto& R = node(n.in[0]).val;
                const auto& I = node(n.in[1]).val;
                const auto& Y = n.val;
                for (int which = 0; which < 2; ++which) {
                    if (!node(n.in[which]).requires_grad) continue;
                    ensure_grad(n.in[which]);
                    auto& gx = node(n.in[which]).grad;
                    const auto& X = which == 0 ? R : I;
                    for (size_t i = 0; i < g.size(); ++i) {
                        const double y = std::max(static_cast<double>(Y[i]), 1e-30);
                        gx[i] += static_cast<T>(double(g[i]) * X[i] / y);
                    }
                }
                break;
            }
            case Op::MatMul: {
                const int M = n.shape[0], N = n.shape[1];
                const int K = node(n.in[0]).shape[1];
                if (node(n.in[0]).requires_grad) {
                    ensure_grad(n.in[0]);
                    kern::matmul_nt_acc(M, N, K, g.data(), node(n.in[1]).val.data(), node(n.in[0]).grad.data());
                }
                if (node(n.in[1]).requires_grad) {
                    ensure_grad(n.in[1]);
                    kern::matmul_tn_acc(M, K, N, node(n.in[0]).val.data(), g.data(), node(n.in[1]).grad.data());
                }
                break;
            }
            case Op::MatMulNT: {
                const int M = n.shape[0], N = n.shape[1];
                const int K = node(n.in[0]).shape[1];
                if (node(n.in[0]).requires_grad) {
                    ensure_grad(n.in[0]);
                    kern::matmul_acc(M, N, K, g.data(), node(n.in[1]).val.data(), node(n.in[0]).grad.data());
                }
                if (node(n.in[1]).requires_grad) {
                    ensure_grad(n.in[1]);
                    kern::matmul_tn_acc(M, N, K, g.data(), node(n.in[0]).val.data(), node(n.in[1]).grad.data());
                }
                break;
            }
            case Op::Conv1d: {
                const int Tn = n.shape[0], K = n.p0, Cin = n.p1, Cout = n.p2;
                if (node(n.in[0]).requires_grad) {
                    ensure_grad(n.in[0]);
                    kern::conv1d_causal_bwd_x(Tn, Cin, Cout, K, node(n.in[1]).val.data(), g.data(),
                                              node(n.in[0]).grad.data());
                }
                const bool want_w = node(n.in[1]).requires_grad;
                const bool has_b = n.in.size() == 3;
                const bool want_b = has_b && node(n.in[2]).requires_grad;
                if (want_w || want_b) {
                    ensure_grad(n.in[1]);
                    if (want_b) ensure_grad(n.in[2]);
                    kern::conv1d_causal_bwd_w(Tn, Cin, Cout, K, node(n.in[0]).val.data(), g.data(),
                                              node(n.in[1]).grad.data(),
                                              want_b ? node(n.in[2]).grad.data() : nullptr);
                }
                break;
            }
            case Op::FrameSignal: {
                if (!node(n.in[0]).requires_grad) break;
                ensure_grad(n.in[0]);
                const int Tn = n.shape[0], win = n.p0, hop = n.p1;
                T* dx = node(n.in[0]).grad.data();
                for (int t = 0; t < Tn; ++t)
                    kern::axpy(static_cast<size_t>(win), T(1), g.data() + static_cast<size_t>(t) * win,
                               dx + static_cast<size_t>(t) * hop);
                break;
            }
            case Op::EmbedRows: {
                if (!node(n.in[0]).requires_grad) break;
                ensure_grad(n.in[0]);
                const int d = n.shape[1];
                T* dt = node(n.in[0]).grad.data();
                for (size_t i = 0; i < n.idx.size(); ++i)
                    kern::axpy(static_cast<size_t>(d), T(1), g.data() + i * d,
                               dt + static_cast<size_t>(n.idx[i]) * d);
                break;
            }
            case Op::TakeRows: {
                if (!node(n.in[0]).requires_grad) break;
                ensure_grad(n.in[0]);
                const int C = n.shape[1];
                kern::axpy(g.size(), T(1), g.data(),
                           node(n.in[0]).grad.data() + static_cast<size_t>(n.p0) * C);
                break;
            }
            case Op::SliceCols: {
                if (!node(n.in[0]).requires_grad) break;
                ensure_grad(n.in[0]);
                const int R = n.shape[0], W = n.shape[1];
                const int C = node(n.in[0]).shape[1];
                T* dx = node(n.in[0]).grad.data();
                for (int r = 0; r < R; ++r)
                    kern::axpy(static_cast<size_t>(W), T(1), g.data() + static_cast<size_t>(r) * W,
                               dx + static_cast<size_t>(r) * C + n.p0);
                break;
            }
            case Op::ConcatCols: {
                const int R = n.shape[0], C = n.shape[1];
                int off = 0;
                for (int x : n.in) {
                    const int W = node(x).shape[1];
                    if (node(x).requires_grad) {
                        ensure_grad(x);
                        T* dx = node(x).grad.data();
                        for (int r = 0; r < R; ++r)
                            kern::axpy(static_cast<size_t>(W), T(1),
                                       g.data() + static_cast<size_t>(r) * C + off,
                                       dx + static_cast<size_t>(r) * W);
                    }
                    off += W;
                }
                break;
            }
            case Op::ConcatRows: {
                size_t off = 0;
                for (int x : n.in) {
                    const size_t sz = node(x).val.size();
                    if (node(x).requires_grad) {
                        ensure_grad(x);
                        kern::axpy(sz, T(1), g.data() + off, node(x).grad.data());
                    }
                    off += sz;
                }
                break;
            }
            case Op::SoftmaxRows: {
                if (!node(n.in[0]).requires_grad) break;
                ensure_grad(n.in[0]);
                const int R = n.shape[0], C = n.shape[1];
                T* dx = node(n.in[0]).grad.data();
                for (int r = 0; r < R; ++r) {
                    const T* y = n.val.data() + static_cast<size_t>(r) * C;
                    const T* gy = g.data() + static_cast<size_t>(r) * C;
                    double s = 0.0;
                    for (int c = 0; c < C; ++c) s += double(gy[c]) * y[c];
                    T* dxr = dx + static_cast<size_t>(r) * C;
                    for (int c = 0; c < C; ++c) dxr[c] += static_cast<T>(y[c] * (double(gy[c]) - s));
                }
                break;
            }
            case Op::CrossEntropyMean: {
                if (!node(n.in[0]).requires_grad) break;
                ensure_grad(n.in[0]);
                const int R = node(n.in[0]).shape[0], C = node(n.in[0]).shape[1];
                const T go = g[0];
                T* dz = node(n.in[0]).grad.data();
                for (int r = 0; r < R; ++r) {
                    const T* p = n.aux.data() + static_cast<size_t>(r) * C;
                    T* dzr = dz + static_cast<size_t>(r) * C;
                    const T scale = go / static_cast<T>(R);
                    for (int c = 0; c < C; ++c) dzr[c] += scale * p[c];
                    dzr[n.idx[r]] -= scale;
                }
                break;
            }
            case Op::RmsNorm: {
                const int R = n.shape[0], C = n.shape[1];
                const auto& X = node(n.in[0]).val;
                const T* gain = node(n.in[1]).val.data();
                const bool want_x = node(n.in[0]).requires_grad;
                const bool want_g = node(n.in[1]).requires_grad;
                if (want_x) ensure_grad(n.in[0]);
                if (want_g) ensure_grad(n.in[1]);
                for (int r = 0; r < R; ++r) {
                    const T* xr = X.data() + static_cast<size_t>(r) * C;
                    const T* gy = g.data() + static_cast<size_t>(r) * C;
                    const double rr = static_cast<double>(n.aux[r]);
                    if (want_x) {
                        double s = 0.0;
                        for (int c = 0; c < C; ++c) s += double(gy[c]) * gain[c] * xr[c];
                        T* dxr = node(n.in[0]).grad.data() + static_cast<size_t>(r) * C;
                        for (int c = 0; c < C; ++c)
                            dxr[c] += static_cast<T>(rr * (double(gain[c]) * gy[c] - double(xr[c]) * rr * rr * s / C));
                    }
                    if (want_g) {
                        T* dg = node(n.in[1]).grad.data();
                        for (int c = 0; c < C; ++c) dg[c] += static_cast<T>(double(gy[c]) * xr[c] * rr);
                    }
                }
                break;
            }
            case Op::Sum: case Op::Mean: {
                if (!node(n.in[0]).requires_grad) break;
                ensure_grad(n.in[0]);
                auto& ga = node(n.in[0]).grad;
                const T go = n.op == Op::Sum ? g[0] : static_cast<T>(double(g[0]) / ga.size());
                for (auto& x : ga) x += go;
                break;
            }
            case Op::MeanAxis0: {
                if (!node(n.in[0]).requires_grad) break;
                ensure_grad(n.in[0]);
                const int R = node(n.in[0]).shape[0], C = n.shape[0];
                T* dx = node(n.in[0]).grad.data();
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c)
                        dx[static_cast<size_t>(r) * C + c] += static_cast<T>(double(g[c]) / R);
                break;
            }
            case Op::Leaf:
                break;
            default:
                throw std::runtime_error("backward: unsupported op on tape");
        }
    }

    static T ew1_deriv(Op op, T x, T y, double s0, double s1) {
        const double xd = static_cast<double>(x), yd = static_cast<double>(y);
        switch (op) {
            case Op::Scale: return static_cast<T>(s0);
            case Op::AddConst: return T(1);
            case Op::Neg: return T(-1);
            case Op::Relu: return x > T(0) ? T(1) : T(0);
            case Op::Silu: {
                const double s = 1.0 / (1.0 + std::exp(-xd));
                return static_cast<T>(s * (1.0 + xd * (1.0 - s)));
            }
            case Op::Sigmoid: return static_cast<T>(yd * (1.0 - yd));
            case Op::Exp: return y;
            case Op::Log: return static_cast<T>(1.0 / xd);
            case Op::Pow: return static_cast<T>(s0 * std::pow(xd, s0 - 1.0));
            case Op::Clamp: return (xd > s0 && xd < s1) ? T(1) : T(0);
            case Op::SignSTE: return T(1);  // straight-through: identity passthrough
            default: throw std::logic_error("ew1_deriv: not a unary op");
        }
    }
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace coch
