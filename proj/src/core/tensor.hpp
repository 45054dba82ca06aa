#pragma once
// Dense row-major value containers shared across the library.

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace coch {

using Shape = std::vector<int>;  // rank 1 or 2 everywhere in this codebase

inline size_t numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("negative shape dimension");
        n *= static_cast<size_t>(d);
    }
    return n;
}

inline int rows_of(const Shape& s) { return s.empty() ? 0 : s[0]; }
inline int cols_of(const Shape& s) { return s.size() >= 2 ? s[1] : 1; }

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> v;

    Tensor() = default;
    Tensor(Shape s) : shape(std::move(s)), v(numel(shape), T(0)) {}
    Tensor(Shape s, std::vector<T> vals) : shape(std::move(s)), v(std::move(vals)) {
        if (v.size() != numel(shape))
            throw std::invalid_argument("tensor value count does not match shape " + shape_str(shape));
    }

    size_t size() const { return v.size(); }
    int rows() const { return rows_of(shape); }
    int cols() const { return cols_of(shape); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    T& at(int r, int c) { return v[static_cast<size_t>(r) * cols() + c]; }
    const T& at(int r, int c) const { return v[static_cast<size_t>(r) * cols() + c]; }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// A named parameter tensor; models keep their weights in ordered lists of these
// so optimizers, checkpoints, and graph wiring all agree on one ordering.
struct Param {
    std::string name;
    TensorF t;
};

}  // namespace coch
