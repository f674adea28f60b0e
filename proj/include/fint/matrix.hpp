// Dense numeric kernels: row-major matrices, batched 3-D stacks, and the
// handful of operations the model stack is built from. No broadcasting;
// every shape mismatch is a hard error.
#pragma once

#include <cmath>
#include <limits>
#include <cstring>
#include <span>
#include <sstream>
#include <vector>

#include "fint/common.hpp"

namespace fint {

struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<real> data; // row-major, data.size() == rows * cols

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, real(0)) {}
    Matrix(size_t r, size_t c, std::vector<real> d) : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != rows * cols) throw ShapeError("Matrix: data length != rows*cols");
    }

    static Matrix identity(size_t n) {
        Matrix m(n, n);
        for (size_t i = 0; i < n; ++i) m.data[i * n + i] = real(1);
        return m;
    }

    real& operator()(size_t r, size_t c) { return data[r * cols + c]; }
    real operator()(size_t r, size_t c) const { return data[r * cols + c]; }

    real* row(size_t r) { return data.data() + r * cols; }
    const real* row(size_t r) const { return data.data() + r * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(real v) { std::fill(data.begin(), data.end(), v); }
};

// Contiguous stack of `batch` matrices of identical shape.
struct BatchTensor {
    size_t batch = 0;
    size_t rows = 0;
    size_t cols = 0;
    std::vector<real> data; // data.size() == batch * rows * cols

    BatchTensor() = default;
    BatchTensor(size_t b, size_t r, size_t c) : batch(b), rows(r), cols(c), data(b * r * c, real(0)) {}

    void resize(size_t b, size_t r, size_t c) {
        batch = b;
        rows = r;
        cols = c;
        data.assign(b * r * c, real(0));
    }

    real* item(size_t b) { return data.data() + b * rows * cols; }
    const real* item(size_t b) const { return data.data() + b * rows * cols; }

    size_t item_size() const { return rows * cols; }
};

namespace detail {

inline void shape_fail(const char* op, size_t ar, size_t ac, size_t br, size_t bc) {
    std::ostringstream os;
    os << op << ": incompatible shapes " << ar << "x" << ac << " and " << br << "x" << bc;
    throw ShapeError(os.str());
}

// out = a(n x k) * b(k x m), raw row-major buffers, out must not alias inputs.
inline void matmul_raw(real* out, const real* a, const real* b, size_t n, size_t k, size_t m) {
    std::memset(out, 0, n * m * sizeof(real));
    for (size_t i = 0; i < n; ++i) {
        const real* arow = a + i * k;
        real* orow = out + i * m;
        for (size_t p = 0; p < k; ++p) {
            const real av = arow[p];
            const real* brow = b + p * m;
            for (size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

// acc(n x m) += a(n x k) * b(m x k)^T   i.e. acc[i][j] += sum_d a[i][d] b[j][d]
inline void gemm_nt_acc(real* acc, const real* a, const real* b, size_t n, size_t k, size_t m) {
    for (size_t i = 0; i < n; ++i) {
        const real* arow = a + i * k;
        real* orow = acc + i * m;
        for (size_t j = 0; j < m; ++j) {
            const real* brow = b + j * k;
            real s = 0;
            for (size_t d = 0; d < k; ++d) s += arow[d] * brow[d];
            orow[j] += s;
        }
    }
}

// acc(k x m) += a(n x k)^T * b(n x m)   i.e. acc[j][d] += sum_i a[i][j] b[i][d]
inline void gemm_tn_acc(real* acc, const real* a, const real* b, size_t n, size_t k, size_t m) {
    for (size_t i = 0; i < n; ++i) {
        const real* arow = a + i * k;
        const real* brow = b + i * m;
        for (size_t j = 0; j < k; ++j) {
            const real av = arow[j];
            real* orow = acc + j * m;
            for (size_t d = 0; d < m; ++d) orow[d] += av * brow[d];
        }
    }
}

} // namespace detail

inline void matmul_into(Matrix& out, const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) detail::shape_fail("matmul", a.rows, a.cols, b.rows, b.cols);
    out.rows = a.rows;
    out.cols = b.cols;
    out.data.resize(a.rows * b.cols);
    detail::matmul_raw(out.data.data(), a.data.data(), b.data.data(), a.rows, a.cols, b.cols);
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul_into(out, a, b);
    return out;
}

inline void hadamard_into(Matrix& out, const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) detail::shape_fail("hadamard", a.rows, a.cols, b.rows, b.cols);
    out.rows = a.rows;
    out.cols = a.cols;
    out.data.resize(a.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    Matrix out;
    hadamard_into(out, a, b);
    return out;
}

// Row i of the result is row i of `a` multiplied by s[i].
inline void rowwise_scale_into(Matrix& out, const Matrix& a, std::span<const real> s) {
    if (s.size() != a.rows) detail::shape_fail("rowwise_scale", a.rows, a.cols, s.size(), 1);
    out.rows = a.rows;
    out.cols = a.cols;
    out.data.resize(a.data.size());
    for (size_t i = 0; i < a.rows; ++i) {
        const real si = s[i];
        const real* src = a.row(i);
        real* dst = out.data.data() + i * a.cols;
        for (size_t j = 0; j < a.cols; ++j) dst[j] = src[j] * si;
    }
}

inline Matrix rowwise_scale(const Matrix& a, std::span<const real> s) {
    Matrix out;
    rowwise_scale_into(out, a, s);
    return out;
}

// Row-major flattening: row i occupies slots [i*cols, (i+1)*cols).
inline std::vector<real> concat_rows_flat(const Matrix& a) {
    return a.data;
}

inline void relu_into(std::span<real> out, std::span<const real> x) {
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > real(0) ? x[i] : real(0);
}

inline std::vector<real> relu(const std::vector<real>& x) {
    std::vector<real> out(x.size());
    relu_into(out, x);
    return out;
}

inline real sigmoid(real x) {
    real s = real(1) / (real(1) + std::exp(-x));
    // stays strictly inside (0,1) even where exp saturates
    if (s >= real(1)) s = std::nextafter(real(1), real(0));
    if (s <= real(0)) s = std::numeric_limits<real>::min();
    return s;
}

// y = A(n x m) * x(m), accumulating in declaration order.
inline void matvec_into(std::span<real> y, const Matrix& a, std::span<const real> x) {
    if (x.size() != a.cols || y.size() != a.rows)
        detail::shape_fail("matvec", a.rows, a.cols, x.size(), 1);
    for (size_t i = 0; i < a.rows; ++i) {
        const real* row = a.row(i);
        real s = 0;
        for (size_t j = 0; j < a.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
}

// y += A(n x m)^T * g(n)
inline void matvec_transposed_acc(std::span<real> y, const Matrix& a, std::span<const real> g) {
    if (g.size() != a.rows || y.size() != a.cols)
        detail::shape_fail("matvec_t", a.rows, a.cols, g.size(), 1);
    for (size_t i = 0; i < a.rows; ++i) {
        const real gi = g[i];
        const real* row = a.row(i);
        for (size_t j = 0; j < a.cols; ++j) y[j] += gi * row[j];
    }
}

// acc(n x m) += g(n) outer x(m)
inline void outer_acc(Matrix& acc, std::span<const real> g, std::span<const real> x) {
    if (g.size() != acc.rows || x.size() != acc.cols)
        detail::shape_fail("outer", acc.rows, acc.cols, g.size(), x.size());
    for (size_t i = 0; i < g.size(); ++i) {
        real* row = acc.row(i);
        const real gi = g[i];
        for (size_t j = 0; j < x.size(); ++j) row[j] += gi * x[j];
    }
}

inline bool all_finite(std::span<const real> x) {
    for (real v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace fint
