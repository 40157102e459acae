#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

// Dense compute kernels shared by the tensor ops. The parallel versions are
// row-parallel: every output element is produced by exactly one thread with a
// fixed serial inner order, so results are bit-identical for any thread count.
// putf::kern::serial holds straightforward reference implementations, kept as
// test oracles and for the kernel benchmark.

namespace putf::kern {

using idx_t = std::int64_t;

// c[n x p] = a[n x m] * b[m x p], or += when accumulate is set.
// ikj order, 4 output rows per pass: every b row is loaded once for four
// accumulator rows, and each c[i,j] still sums k in ascending order, so the
// result is bit-identical to the plain ikj loop for any thread count.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t n, std::size_t m, std::size_t p,
          bool accumulate = false) {
    const std::size_t blocks = n / 4;
#pragma omp parallel for schedule(static) if (n * m * p > 16384)
    for (idx_t blk = 0; blk < static_cast<idx_t>(blocks); ++blk) {
        const std::size_t i = static_cast<std::size_t>(blk) * 4;
        T* c0 = c + (i + 0) * p;
        T* c1 = c + (i + 1) * p;
        T* c2 = c + (i + 2) * p;
        T* c3 = c + (i + 3) * p;
        if (!accumulate)
            for (std::size_t j = 0; j < p; ++j) c0[j] = c1[j] = c2[j] = c3[j] = T(0);
        const T* arow = a + i * m;
        for (std::size_t k = 0; k < m; ++k) {
            const T a0 = arow[k];
            const T a1 = arow[m + k];
            const T a2 = arow[2 * m + k];
            const T a3 = arow[3 * m + k];
            const T* brow = b + k * p;
            for (std::size_t j = 0; j < p; ++j) {
                const T bv = brow[j];
                c0[j] += a0 * bv;
                c1[j] += a1 * bv;
                c2[j] += a2 * bv;
                c3[j] += a3 * bv;
            }
        }
    }
    for (std::size_t i = blocks * 4; i < n; ++i) {
        T* crow = c + i * p;
        if (!accumulate)
            for (std::size_t j = 0; j < p; ++j) crow[j] = T(0);
        const T* arow = a + i * m;
        for (std::size_t k = 0; k < m; ++k) {
            const T av = arow[k];
            const T* brow = b + k * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void transpose(const T* a, std::size_t n, std::size_t m, T* out) {
#pragma omp parallel for schedule(static) if (n * m > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i) * m + j];
}

// c[n x p] (+)= a[n x m] * b[p x m]^T
template <typename T>
void gemm_abt(const T* a, const T* b, T* c, std::size_t n, std::size_t m, std::size_t p,
              bool accumulate = false) {
    std::vector<T> bt(m * p);
    transpose(b, p, m, bt.data());
    gemm(a, bt.data(), c, n, m, p, accumulate);
}

// c[n x p] (+)= a[m x n]^T * b[m x p], without materializing a^T: each output
// row k accumulates a[r, k] * b[r, :] over r, so the wide inner loop amortizes
// the strided a reads.
template <typename T>
void gemm_atb(const T* a, const T* b, T* c, std::size_t n, std::size_t m, std::size_t p,
              bool accumulate = false) {
    const std::size_t blocks = n / 4;
#pragma omp parallel for schedule(static) if (n * m * p > 16384)
    for (idx_t blk = 0; blk < static_cast<idx_t>(blocks); ++blk) {
        const std::size_t k = static_cast<std::size_t>(blk) * 4;
        T* c0 = c + (k + 0) * p;
        T* c1 = c + (k + 1) * p;
        T* c2 = c + (k + 2) * p;
        T* c3 = c + (k + 3) * p;
        if (!accumulate)
            for (std::size_t j = 0; j < p; ++j) c0[j] = c1[j] = c2[j] = c3[j] = T(0);
        for (std::size_t r = 0; r < m; ++r) {
            const T* acol = a + r * n + k;
            const T a0 = acol[0];
            const T a1 = acol[1];
            const T a2 = acol[2];
            const T a3 = acol[3];
            const T* brow = b + r * p;
            for (std::size_t j = 0; j < p; ++j) {
                const T bv = brow[j];
                c0[j] += a0 * bv;
                c1[j] += a1 * bv;
                c2[j] += a2 * bv;
                c3[j] += a3 * bv;
            }
        }
    }
    for (std::size_t k = blocks * 4; k < n; ++k) {
        T* crow = c + k * p;
        if (!accumulate)
            for (std::size_t j = 0; j < p; ++j) crow[j] = T(0);
        for (std::size_t r = 0; r < m; ++r) {
            const T av = a[r * n + k];
            const T* brow = b + r * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

// Column-wise reduction walked row-major: fixed 256-row blocks fill private
// accumulators (fn(row_index, acc) adds one row), then blocks combine in
// index order. Deterministic for any thread count, and the strided
// per-column walk is avoided entirely.
template <typename T, typename RowFn>
void row_block_reduce(std::size_t rows, std::size_t width, T* out, RowFn fn) {
    constexpr std::size_t kBlock = 256;
    const std::size_t blocks = (rows + kBlock - 1) / kBlock;
    if (blocks <= 1) {
        for (std::size_t i = 0; i < width; ++i) out[i] = T(0);
        for (std::size_t r = 0; r < rows; ++r) fn(r, out);
        return;
    }
    std::vector<T> partial(blocks * width, T(0));
#pragma omp parallel for schedule(static) if (rows * width > 16384)
    for (idx_t b = 0; b < static_cast<idx_t>(blocks); ++b) {
        T* acc = partial.data() + static_cast<std::size_t>(b) * width;
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        const std::size_t hi = lo + kBlock < rows ? lo + kBlock : rows;
        for (std::size_t r = lo; r < hi; ++r) fn(r, acc);
    }
    for (std::size_t i = 0; i < width; ++i) out[i] = T(0);
    for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < width; ++i) out[i] += partial[b * width + i];
}

// Row-wise softmax with max subtraction; out may alias x.
template <typename T>
void softmax_rows(const T* x, T* out, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > 4096)
    for (idx_t r = 0; r < static_cast<idx_t>(rows); ++r) {
        const T* xi = x + static_cast<std::size_t>(r) * cols;
        T* yi = out + static_cast<std::size_t>(r) * cols;
        T mx = xi[0];
        for (std::size_t j = 1; j < cols; ++j) mx = xi[j] > mx ? xi[j] : mx;
        T denom = T(0);
        for (std::size_t j = 0; j < cols; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            denom += yi[j];
        }
        const T inv = T(1) / denom;
        for (std::size_t j = 0; j < cols; ++j) yi[j] *= inv;
    }
}

// Full reduction with fixed-size chunk partials combined in index order;
// the result does not depend on the number of threads.
template <typename T>
T sum_deterministic(const T* x, std::size_t n) {
    constexpr std::size_t kChunk = 4096;
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    if (chunks <= 1) {
        T s = T(0);
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    std::vector<T> partial(chunks, T(0));
#pragma omp parallel for schedule(static)
    for (idx_t c = 0; c < static_cast<idx_t>(chunks); ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
        const std::size_t hi = lo + kChunk < n ? lo + kChunk : n;
        T s = T(0);
        for (std::size_t i = lo; i < hi; ++i) s += x[i];
        partial[static_cast<std::size_t>(c)] = s;
    }
    T s = T(0);
    for (std::size_t c = 0; c < chunks; ++c) s += partial[c];
    return s;
}

template <typename T>
bool all_finite(const T* x, std::size_t n) {
    bool ok = true;
#pragma omp parallel for schedule(static) reduction(&& : ok) if (n > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(n); ++i) ok = ok && std::isfinite(x[static_cast<std::size_t>(i)]);
    return ok;
}

namespace serial {

// Dot-product form, one independent loop nest per output element.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t n, std::size_t m, std::size_t p,
          bool accumulate = false) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            T acc = T(0);
            for (std::size_t k = 0; k < m; ++k) acc += a[i * m + k] * b[k * p + j];
            if (accumulate)
                c[i * p + j] += acc;
            else
                c[i * p + j] = acc;
        }
    }
}

template <typename T>
void softmax_rows(const T* x, T* out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xi = x + r * cols;
        T* yi = out + r * cols;
        T mx = xi[0];
        for (std::size_t j = 1; j < cols; ++j) mx = xi[j] > mx ? xi[j] : mx;
        T denom = T(0);
        for (std::size_t j = 0; j < cols; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            denom += yi[j];
        }
        for (std::size_t j = 0; j < cols; ++j) yi[j] /= denom;
    }
}

}  // namespace serial

}  // namespace putf::kern
