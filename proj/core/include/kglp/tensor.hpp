#pragma once

#include <cstdint>
#include <vector>

namespace kglp {

// Dense row-major matrix. Small enough tensors that plain loops (with -O3
// autovectorization) cover every use in the library.
template <typename T>
struct Matrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(std::int64_t r, std::int64_t c, T fill = T{})
        : rows(r), cols(c), data(static_cast<std::size_t>(r * c), fill) {}

    T* row(std::int64_t r) { return data.data() + r * cols; }
    const T* row(std::int64_t r) const { return data.data() + r * cols; }

    T& at(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * cols + c)]; }
    T at(std::int64_t r, std::int64_t c) const {
        return data[static_cast<std::size_t>(r * cols + c)];
    }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

using FeatureMatrix = Matrix<float>;

template <typename To, typename From>
Matrix<To> cast_matrix(const Matrix<From>& m) {
    Matrix<To> out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<To>(m.data[i]);
    return out;
}

template <typename T>
T dot(const T* a, const T* b, std::int64_t n) {
    T acc = T(0);
    for (std::int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// y += a * x
template <typename T>
void axpy(T a, const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// y = W x + b, W is out_dim x in_dim.
template <typename T>
void affine(const Matrix<T>& w, const std::vector<T>& b, const T* x, T* y) {
    for (std::int64_t r = 0; r < w.rows; ++r) y[r] = dot(w.row(r), x, w.cols) + b[r];
}

// acc += W^T g  (acc has in_dim entries, g has out_dim)
template <typename T>
void add_matvec_transposed(const Matrix<T>& w, const T* g, T* acc) {
    for (std::int64_t r = 0; r < w.rows; ++r) axpy(g[r], w.row(r), acc, w.cols);
}

// W += g x^T  (outer product accumulated into an out_dim x in_dim gradient)
template <typename T>
void add_outer(Matrix<T>& w, const T* g, const T* x) {
    for (std::int64_t r = 0; r < w.rows; ++r) axpy(g[r], x, w.row(r), w.cols);
}

}  // namespace kglp
