#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "putf/kernels.hpp"
#include "putf/tensor.hpp"

// Differentiable tensor ops. Every op validates shapes, computes the forward
// value through the kernels, rejects non-finite outputs, and, when a tape is
// active and any input needs gradients, records a backward closure.

namespace putf::ops {

namespace detail {

template <typename T>
bool tracking() {
    return active_tape<T>() != nullptr;
}

template <typename T, typename... Ts>
bool tracking(const Tensor<T>& first, const Ts&... rest) {
    if (!active_tape<T>()) return false;
    bool any = first.grad_needed();
    ((any = any || rest.grad_needed()), ...);
    return any;
}

template <typename T>
void check_finite(const char* op, const Tensor<T>& y) {
    auto v = y.values();
    if (kern::all_finite(v.data(), v.size())) return;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i]))
            throw NumericError(std::string(op) + ": non-finite output at flat index " +
                               std::to_string(i));
}

// Marks the output as tape-connected, allocates grad buffers on every tensor
// that will receive gradients, and records the closure.
template <typename T, typename Fn>
void record(Fn&& fn, std::vector<Tensor<T>> tensors, Tensor<T>& out) {
    out.ensure_grad();
    out.payload()->tape_connected = true;
    std::vector<std::shared_ptr<TensorPayload<T>>> involved;
    involved.reserve(tensors.size() + 1);
    for (auto& t : tensors) {
        if (t.grad_needed()) t.ensure_grad();
        involved.push_back(t.payload());
    }
    involved.push_back(out.payload());
    active_tape<T>()->record(std::forward<Fn>(fn), std::move(involved));
}

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    for (std::size_t i = 0; i < small.size(); ++i)
        if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
    return true;
}

}  // namespace detail

using kern::idx_t;

// y[..., j] = sum_i x[..., i] * w[i, j] + b[j]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (w.rank() != 2)
        throw ShapeError("linear: weight must be rank 2, got " + shape_str(w.shape()));
    const std::size_t cin = w.dim(0), cout = w.dim(1);
    if (x.dim(x.rank() - 1) != cin)
        throw ShapeError("linear: input " + shape_str(x.shape()) + " does not contract with weight " +
                         shape_str(w.shape()));
    if (b.rank() != 1 || b.dim(0) != cout)
        throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match weight " +
                         shape_str(w.shape()));

    Shape out_shape = x.shape();
    out_shape.back() = cout;
    Tensor<T> y(out_shape);
    const std::size_t rows = x.numel() / cin;
    kern::gemm(x.values().data(), w.values().data(), y.values_mut().data(), rows, cin, cout);
    {
        T* yd = y.values_mut().data();
        const T* bd = b.values().data();
#pragma omp parallel for schedule(static) if (rows * cout > 16384)
        for (idx_t i = 0; i < static_cast<idx_t>(rows); ++i)
            for (std::size_t j = 0; j < cout; ++j) yd[static_cast<std::size_t>(i) * cout + j] += bd[j];
    }
    detail::check_finite("linear", y);

    if (detail::tracking(x, w, b)) {
        Tensor<T> xc = x, wc = w, bc = b, yc = y;
        detail::record<T>(
            [xc, wc, bc, yc, rows, cin, cout]() mutable {
                const T* gy = yc.grad().data();
                if (xc.grad_needed())
                    kern::gemm_abt(gy, wc.values().data(), xc.grad_mut().data(), rows, cout, cin, true);
                if (wc.grad_needed())
                    kern::gemm_atb(xc.values().data(), gy, wc.grad_mut().data(), cin, rows, cout, true);
                if (bc.grad_needed()) {
                    std::vector<T> sums(cout);
                    kern::row_block_reduce<T>(rows, cout, sums.data(), [&](std::size_t r, T* acc) {
                        const T* row = gy + r * cout;
                        for (std::size_t j = 0; j < cout; ++j) acc[j] += row[j];
                    });
                    T* gb = bc.grad_mut().data();
                    for (std::size_t j = 0; j < cout; ++j) gb[j] += sums[j];
                }
            },
            {x, w, b}, y);
    }
    return y;
}

// Matrix product over the trailing two dims; rank 2, or rank 3 with equal
// leading extents.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3))
        throw ShapeError("matmul: ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
    if (a.rank() == 3 && b.dim(0) != batch)
        throw ShapeError("matmul: batch mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t n = a.dim(a.rank() - 2), m = a.dim(a.rank() - 1);
    const std::size_t m2 = b.dim(b.rank() - 2), p = b.dim(b.rank() - 1);
    if (m != m2)
        throw ShapeError("matmul: contraction mismatch " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));

    Shape out_shape = a.rank() == 3 ? Shape{batch, n, p} : Shape{n, p};
    Tensor<T> y(out_shape);
    for (std::size_t t = 0; t < batch; ++t)
        kern::gemm(a.values().data() + t * n * m, b.values().data() + t * m * p,
                   y.values_mut().data() + t * n * p, n, m, p);
    detail::check_finite("matmul", y);

    if (detail::tracking(a, b)) {
        Tensor<T> ac = a, bc = b, yc = y;
        detail::record<T>(
            [ac, bc, yc, batch, n, m, p]() mutable {
                const T* gy = yc.grad().data();
                for (std::size_t t = 0; t < batch; ++t) {
                    if (ac.grad_needed())
                        kern::gemm_abt(gy + t * n * p, bc.values().data() + t * m * p,
                                       ac.grad_mut().data() + t * n * m, n, p, m, true);
                    if (bc.grad_needed())
                        kern::gemm_atb(ac.values().data() + t * n * m, gy + t * n * p,
                                       bc.grad_mut().data() + t * m * p, m, n, p, true);
                }
            },
            {a, b}, y);
    }
    return y;
}

// Swap the trailing two dims (rank 2 or 3).
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
    if (x.rank() != 2 && x.rank() != 3)
        throw ShapeError("transpose: rank must be 2 or 3, got " + shape_str(x.shape()));
    const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
    const std::size_t n = x.dim(x.rank() - 2), m = x.dim(x.rank() - 1);
    Shape out_shape = x.shape();
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    Tensor<T> y(out_shape);
    for (std::size_t t = 0; t < batch; ++t)
        kern::transpose(x.values().data() + t * n * m, n, m, y.values_mut().data() + t * n * m);
    detail::check_finite("transpose", y);

    if (detail::tracking(x)) {
        Tensor<T> xc = x, yc = y;
        detail::record<T>(
            [xc, yc, batch, n, m]() mutable {
                if (!xc.grad_needed()) return;
                const T* gy = yc.grad().data();
                T* gx = xc.grad_mut().data();
                for (std::size_t t = 0; t < batch; ++t)
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < m; ++j)
                            gx[t * n * m + i * m + j] += gy[t * n * m + j * n + i];
            },
            {x}, y);
    }
    return y;
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    const std::size_t cols = x.dim(x.rank() - 1);
    const std::size_t rows = x.numel() / cols;
    Tensor<T> y(x.shape());
    kern::softmax_rows(x.values().data(), y.values_mut().data(), rows, cols);
    detail::check_finite("softmax", y);

    if (detail::tracking(x)) {
        Tensor<T> xc = x, yc = y;
        detail::record<T>(
            [xc, yc, rows, cols]() mutable {
                if (!xc.grad_needed()) return;
                const T* gy = yc.grad().data();
                const T* yv = yc.values().data();
                T* gx = xc.grad_mut().data();
#pragma omp parallel for schedule(static) if (rows * cols > 4096)
                for (idx_t r = 0; r < static_cast<idx_t>(rows); ++r) {
                    const std::size_t off = static_cast<std::size_t>(r) * cols;
                    T dot = T(0);
                    for (std::size_t j = 0; j < cols; ++j) dot += gy[off + j] * yv[off + j];
                    for (std::size_t j = 0; j < cols; ++j)
                        gx[off + j] += yv[off + j] * (gy[off + j] - dot);
                }
            },
            {x}, y);
    }
    return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    const T* xd = x.values().data();
    T* yd = y.values_mut().data();
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static) if (n > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
        yd[static_cast<std::size_t>(i)] = xd[static_cast<std::size_t>(i)] > T(0) ? xd[static_cast<std::size_t>(i)] : T(0);
    detail::check_finite("relu", y);

    if (detail::tracking(x)) {
        Tensor<T> xc = x, yc = y;
        detail::record<T>(
            [xc, yc, n]() mutable {
                if (!xc.grad_needed()) return;
                const T* gy = yc.grad().data();
                const T* xd = xc.values().data();
                T* gx = xc.grad_mut().data();
#pragma omp parallel for schedule(static) if (n > 16384)
                for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
                    if (xd[static_cast<std::size_t>(i)] > T(0)) gx[static_cast<std::size_t>(i)] += gy[static_cast<std::size_t>(i)];
            },
            {x}, y);
    }
    return y;
}

// x + y, where y's shape equals x's or is a trailing suffix of it
// (broadcast over the leading dims).
template <typename T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y) {
    if (!detail::is_suffix(y.shape(), x.shape()))
        throw ShapeError("add: " + shape_str(y.shape()) + " does not broadcast onto " +
                         shape_str(x.shape()));
    const std::size_t ylen = y.numel();
    const std::size_t rows = x.numel() / ylen;
    Tensor<T> out(x.shape());
    const T* xd = x.values().data();
    const T* yd = y.values().data();
    T* od = out.values_mut().data();
#pragma omp parallel for schedule(static) if (x.numel() > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(rows); ++i)
        for (std::size_t j = 0; j < ylen; ++j)
            od[static_cast<std::size_t>(i) * ylen + j] = xd[static_cast<std::size_t>(i) * ylen + j] + yd[j];
    detail::check_finite("add", out);

    if (detail::tracking(x, y)) {
        Tensor<T> xc = x, yc = y, oc = out;
        detail::record<T>(
            [xc, yc, oc, rows, ylen]() mutable {
                const T* g = oc.grad().data();
                if (xc.grad_needed()) {
                    T* gx = xc.grad_mut().data();
                    const std::size_t n = rows * ylen;
#pragma omp parallel for schedule(static) if (n > 16384)
                    for (idx_t i = 0; i < static_cast<idx_t>(n); ++i) gx[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
                }
                if (yc.grad_needed()) {
                    std::vector<T> sums(ylen);
                    kern::row_block_reduce<T>(rows, ylen, sums.data(), [&](std::size_t r, T* acc) {
                        const T* row = g + r * ylen;
                        for (std::size_t j = 0; j < ylen; ++j) acc[j] += row[j];
                    });
                    T* gy = yc.grad_mut().data();
                    for (std::size_t j = 0; j < ylen; ++j) gy[j] += sums[j];
                }
            },
            {x, y}, out);
    }
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& x, const Tensor<T>& y) {
    if (x.shape() != y.shape())
        throw ShapeError("sub: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    Tensor<T> out(x.shape());
    const T* xd = x.values().data();
    const T* yd = y.values().data();
    T* od = out.values_mut().data();
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static) if (n > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
        od[static_cast<std::size_t>(i)] = xd[static_cast<std::size_t>(i)] - yd[static_cast<std::size_t>(i)];
    detail::check_finite("sub", out);

    if (detail::tracking(x, y)) {
        Tensor<T> xc = x, yc = y, oc = out;
        detail::record<T>(
            [xc, yc, oc, n]() mutable {
                const T* g = oc.grad().data();
                if (xc.grad_needed()) {
                    T* gx = xc.grad_mut().data();
                    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
                }
                if (yc.grad_needed()) {
                    T* gy = yc.grad_mut().data();
                    for (std::size_t i = 0; i < n; ++i) gy[i] -= g[i];
                }
            },
            {x, y}, out);
    }
    return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
    Tensor<T> out(x.shape());
    const T* xd = x.values().data();
    T* od = out.values_mut().data();
    const std::size_t n = x.numel();
#pragma omp parallel for schedule(static) if (n > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(n); ++i) od[static_cast<std::size_t>(i)] = xd[static_cast<std::size_t>(i)] * c;
    detail::check_finite("mul_scalar", out);

    if (detail::tracking(x)) {
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc, c, n]() mutable {
                if (!xc.grad_needed()) return;
                const T* g = oc.grad().data();
                T* gx = xc.grad_mut().data();
                for (std::size_t i = 0; i < n; ++i) gx[i] += c * g[i];
            },
            {x}, out);
    }
    return out;
}

template <typename T>
Tensor<T> concat_lastdim(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ArgumentError("concat: no inputs");
    Shape lead = xs[0].shape();
    lead.pop_back();
    std::size_t total = 0;
    for (const auto& x : xs) {
        Shape l = x.shape();
        std::size_t w = l.back();
        l.pop_back();
        if (l != lead)
            throw ShapeError("concat: leading dims differ, " + shape_str(xs[0].shape()) + " vs " +
                             shape_str(x.shape()));
        total += w;
    }
    Shape out_shape = lead;
    out_shape.push_back(total);
    Tensor<T> out(out_shape);
    const std::size_t rows = shape_numel(lead);
    T* od = out.values_mut().data();
    std::size_t off = 0;
    for (const auto& x : xs) {
        const std::size_t w = x.shape().back();
        const T* xd = x.values().data();
#pragma omp parallel for schedule(static) if (rows * w > 16384)
        for (idx_t i = 0; i < static_cast<idx_t>(rows); ++i)
            for (std::size_t j = 0; j < w; ++j)
                od[static_cast<std::size_t>(i) * total + off + j] = xd[static_cast<std::size_t>(i) * w + j];
        off += w;
    }
    detail::check_finite("concat", out);

    bool track = false;
    if (active_tape<T>())
        for (const auto& x : xs) track = track || x.grad_needed();
    if (track) {
        std::vector<Tensor<T>> inputs = xs;
        Tensor<T> oc = out;
        detail::record<T>(
            [inputs, oc, rows, total]() mutable {
                const T* g = oc.grad().data();
                std::size_t off = 0;
                for (auto& x : inputs) {
                    const std::size_t w = x.shape().back();
                    if (x.grad_needed()) {
                        T* gx = x.grad_mut().data();
#pragma omp parallel for schedule(static) if (rows * w > 16384)
                        for (idx_t i = 0; i < static_cast<idx_t>(rows); ++i)
                            for (std::size_t j = 0; j < w; ++j)
                                gx[static_cast<std::size_t>(i) * w + j] += g[static_cast<std::size_t>(i) * total + off + j];
                    }
                    off += w;
                }
            },
            xs, out);
    }
    return out;
}

template <typename T>
Tensor<T> slice_lastdim(const Tensor<T>& x, std::size_t from, std::size_t width) {
    const std::size_t c = x.dim(x.rank() - 1);
    if (width == 0 || from + width > c)
        throw IndexError("slice: range [" + std::to_string(from) + ", " + std::to_string(from + width) +
                         ") out of channel dim " + std::to_string(c));
    Shape out_shape = x.shape();
    out_shape.back() = width;
    Tensor<T> out(out_shape);
    const std::size_t rows = x.numel() / c;
    const T* xd = x.values().data();
    T* od = out.values_mut().data();
#pragma omp parallel for schedule(static) if (rows * width > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(rows); ++i)
        for (std::size_t j = 0; j < width; ++j)
            od[static_cast<std::size_t>(i) * width + j] = xd[static_cast<std::size_t>(i) * c + from + j];
    detail::check_finite("slice", out);

    if (detail::tracking(x)) {
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc, rows, c, from, width]() mutable {
                if (!xc.grad_needed()) return;
                const T* g = oc.grad().data();
                T* gx = xc.grad_mut().data();
#pragma omp parallel for schedule(static) if (rows * width > 16384)
                for (idx_t i = 0; i < static_cast<idx_t>(rows); ++i)
                    for (std::size_t j = 0; j < width; ++j)
                        gx[static_cast<std::size_t>(i) * c + from + j] += g[static_cast<std::size_t>(i) * width + j];
            },
            {x}, out);
    }
    return out;
}

// Rank-2 leading-dim slice, used to split stored weight matrices.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t from, std::size_t count) {
    if (x.rank() != 2) throw ShapeError("slice_rows: rank must be 2, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1);
    if (count == 0 || from + count > n)
        throw IndexError("slice_rows: range [" + std::to_string(from) + ", " +
                         std::to_string(from + count) + ") out of " + std::to_string(n) + " rows");
    Tensor<T> out(Shape{count, c});
    const T* xd = x.values().data();
    T* od = out.values_mut().data();
    for (std::size_t i = 0; i < count * c; ++i) od[i] = xd[from * c + i];
    detail::check_finite("slice_rows", out);

    if (detail::tracking(x)) {
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc, from, count, c]() mutable {
                if (!xc.grad_needed()) return;
                const T* g = oc.grad().data();
                T* gx = xc.grad_mut().data();
                for (std::size_t i = 0; i < count * c; ++i) gx[from * c + i] += g[i];
            },
            {x}, out);
    }
    return out;
}

// out[i, j, :] = x[idx[i*k + j], :]. Indices are constants (no gradient
// through neighbor selection); the backward scatters additively.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::uint32_t> idx, std::size_t k) {
    if (x.rank() != 2) throw ShapeError("gather_rows: rank must be 2, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1);
    if (k == 0 || idx.size() != n * k)
        throw ShapeError("gather_rows: index table size " + std::to_string(idx.size()) +
                         " != " + std::to_string(n) + " x " + std::to_string(k));
    for (std::size_t i = 0; i < idx.size(); ++i)
        if (idx[i] >= n)
            throw IndexError("gather_rows: index " + std::to_string(idx[i]) + " out of range " +
                             std::to_string(n));
    Tensor<T> out(Shape{n, k, c});
    const T* xd = x.values().data();
    T* od = out.values_mut().data();
#pragma omp parallel for schedule(static) if (n * k * c > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const T* src = xd + static_cast<std::size_t>(idx[static_cast<std::size_t>(i) * k + j]) * c;
            T* dst = od + (static_cast<std::size_t>(i) * k + j) * c;
            for (std::size_t q = 0; q < c; ++q) dst[q] = src[q];
        }
    detail::check_finite("gather_rows", out);

    if (detail::tracking(x)) {
        std::vector<std::uint32_t> idx_copy(idx.begin(), idx.end());
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc, idx_copy, n, k, c]() mutable {
                if (!xc.grad_needed()) return;
                const T* g = oc.grad().data();
                T* gx = xc.grad_mut().data();
                // Serial row-major scatter-add: contiguous reads and a fixed
                // accumulation order (scattered writes race under threads).
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const T* src = g + (i * k + j) * c;
                        T* dst = gx + static_cast<std::size_t>(idx_copy[i * k + j]) * c;
                        for (std::size_t q = 0; q < c; ++q) dst[q] += src[q];
                    }
            },
            {x}, out);
    }
    return out;
}

// out[i, j, :] = x[i, :] for j in [0, k)
template <typename T>
Tensor<T> dup_rows(const Tensor<T>& x, std::size_t k) {
    if (x.rank() != 2) throw ShapeError("dup_rows: rank must be 2, got " + shape_str(x.shape()));
    if (k == 0) throw ArgumentError("dup_rows: k must be positive");
    const std::size_t n = x.dim(0), c = x.dim(1);
    Tensor<T> out(Shape{n, k, c});
    const T* xd = x.values().data();
    T* od = out.values_mut().data();
#pragma omp parallel for schedule(static) if (n * k * c > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t q = 0; q < c; ++q)
                od[(static_cast<std::size_t>(i) * k + j) * c + q] = xd[static_cast<std::size_t>(i) * c + q];
    detail::check_finite("dup_rows", out);

    if (detail::tracking(x)) {
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc, n, k, c]() mutable {
                if (!xc.grad_needed()) return;
                const T* g = oc.grad().data();
                T* gx = xc.grad_mut().data();
#pragma omp parallel for schedule(static) if (n * k * c > 16384)
                for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
                    for (std::size_t j = 0; j < k; ++j)
                        for (std::size_t q = 0; q < c; ++q)
                            gx[static_cast<std::size_t>(i) * c + q] += g[(static_cast<std::size_t>(i) * k + j) * c + q];
            },
            {x}, out);
    }
    return out;
}

// Max over the middle axis of an [N, k, C] tensor. The gradient routes to the
// argmax element; the first index wins ties.
template <typename T>
Tensor<T> max_over_axis(const Tensor<T>& x, std::size_t axis) {
    if (x.rank() != 3 || axis != 1)
        throw ShapeError("max_over_axis: only rank-3 axis 1 is supported, got " +
                         shape_str(x.shape()) + " axis " + std::to_string(axis));
    const std::size_t n = x.dim(0), k = x.dim(1), c = x.dim(2);
    Tensor<T> out(Shape{n, c});
    std::vector<std::uint32_t> amax(n * c, 0);
    const T* xd = x.values().data();
    T* od = out.values_mut().data();
#pragma omp parallel for schedule(static) if (n * k * c > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
        for (std::size_t q = 0; q < c; ++q) {
            T best = xd[(static_cast<std::size_t>(i) * k) * c + q];
            std::uint32_t bj = 0;
            for (std::size_t j = 1; j < k; ++j) {
                const T v = xd[(static_cast<std::size_t>(i) * k + j) * c + q];
                if (v > best) {
                    best = v;
                    bj = static_cast<std::uint32_t>(j);
                }
            }
            od[static_cast<std::size_t>(i) * c + q] = best;
            amax[static_cast<std::size_t>(i) * c + q] = bj;
        }
    detail::check_finite("max_over_axis", out);

    if (detail::tracking(x)) {
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc, amax = std::move(amax), n, k, c]() mutable {
                if (!xc.grad_needed()) return;
                const T* g = oc.grad().data();
                T* gx = xc.grad_mut().data();
#pragma omp parallel for schedule(static) if (n * c > 16384)
                for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
                    for (std::size_t q = 0; q < c; ++q) {
                        const std::size_t j = amax[static_cast<std::size_t>(i) * c + q];
                        gx[(static_cast<std::size_t>(i) * k + j) * c + q] += g[static_cast<std::size_t>(i) * c + q];
                    }
            },
            {x}, out);
    }
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::scalar(kern::sum_deterministic(x.values().data(), x.numel()));
    detail::check_finite("sum", out);
    if (detail::tracking(x)) {
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc]() mutable {
                if (!xc.grad_needed()) return;
                const T g = oc.grad()[0];
                T* gx = xc.grad_mut().data();
                for (std::size_t i = 0; i < xc.numel(); ++i) gx[i] += g;
            },
            {x}, out);
    }
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    const T inv = T(1) / static_cast<T>(x.numel());
    Tensor<T> out = Tensor<T>::scalar(kern::sum_deterministic(x.values().data(), x.numel()) * inv);
    detail::check_finite("mean", out);
    if (detail::tracking(x)) {
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc, inv]() mutable {
                if (!xc.grad_needed()) return;
                const T g = oc.grad()[0] * inv;
                T* gx = xc.grad_mut().data();
                for (std::size_t i = 0; i < xc.numel(); ++i) gx[i] += g;
            },
            {x}, out);
    }
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
    Tensor<T> out(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()));
    detail::check_finite("reshape", out);
    if (detail::tracking(x)) {
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc]() mutable {
                if (!xc.grad_needed()) return;
                const T* g = oc.grad().data();
                T* gx = xc.grad_mut().data();
                for (std::size_t i = 0; i < xc.numel(); ++i) gx[i] += g[i];
            },
            {x}, out);
    }
    return out;
}

// Per-position normalization over the channel (last) dim.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const std::size_t c = x.dim(x.rank() - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
        throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(c) + "], got " +
                         shape_str(gamma.shape()) + " / " + shape_str(beta.shape()));
    const std::size_t rows = x.numel() / c;
    Tensor<T> out(x.shape());
    std::vector<T> xhat(x.numel());
    std::vector<T> inv_std(rows);
    const T* xd = x.values().data();
    const T* gd = gamma.values().data();
    const T* bd = beta.values().data();
    T* od = out.values_mut().data();
#pragma omp parallel for schedule(static) if (rows * c > 4096)
    for (idx_t r = 0; r < static_cast<idx_t>(rows); ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * c;
        T mu = T(0);
        for (std::size_t j = 0; j < c; ++j) mu += xd[off + j];
        mu /= static_cast<T>(c);
        T var = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            const T d = xd[off + j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T inv = T(1) / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = inv;
        for (std::size_t j = 0; j < c; ++j) {
            const T xh = (xd[off + j] - mu) * inv;
            xhat[off + j] = xh;
            od[off + j] = gd[j] * xh + bd[j];
        }
    }
    detail::check_finite("layer_norm", out);

    if (detail::tracking(x, gamma, beta)) {
        Tensor<T> xc = x, gc = gamma, bc = beta, oc = out;
        detail::record<T>(
            [xc, gc, bc, oc, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, c]() mutable {
                const T* g = oc.grad().data();
                const T* gd = gc.values().data();
                if (gc.grad_needed() || bc.grad_needed()) {
                    std::vector<T> sums(2 * c);
                    kern::row_block_reduce<T>(rows, 2 * c, sums.data(), [&](std::size_t r, T* acc) {
                        const T* grow = g + r * c;
                        const T* xrow = xhat.data() + r * c;
                        for (std::size_t j = 0; j < c; ++j) {
                            acc[j] += grow[j] * xrow[j];
                            acc[c + j] += grow[j];
                        }
                    });
                    if (gc.grad_needed()) {
                        T* ggamma = gc.grad_mut().data();
                        for (std::size_t j = 0; j < c; ++j) ggamma[j] += sums[j];
                    }
                    if (bc.grad_needed()) {
                        T* gbeta = bc.grad_mut().data();
                        for (std::size_t j = 0; j < c; ++j) gbeta[j] += sums[c + j];
                    }
                }
                if (xc.grad_needed()) {
                    T* gx = xc.grad_mut().data();
#pragma omp parallel for schedule(static) if (rows * c > 4096)
                    for (idx_t r = 0; r < static_cast<idx_t>(rows); ++r) {
                        const std::size_t off = static_cast<std::size_t>(r) * c;
                        T mean_h = T(0), mean_hx = T(0);
                        for (std::size_t j = 0; j < c; ++j) {
                            const T h = g[off + j] * gd[j];
                            mean_h += h;
                            mean_hx += h * xhat[off + j];
                        }
                        mean_h /= static_cast<T>(c);
                        mean_hx /= static_cast<T>(c);
                        const T inv = inv_std[static_cast<std::size_t>(r)];
                        for (std::size_t j = 0; j < c; ++j) {
                            const T h = g[off + j] * gd[j];
                            gx[off + j] += inv * (h - mean_h - xhat[off + j] * mean_hx);
                        }
                    }
                }
            },
            {x, gamma, beta}, out);
    }
    return out;
}

// Normalization over all non-channel dims. In train mode batch statistics are
// used and the running stats are updated in place (running tensors are state,
// never tape-tracked); in eval mode the running stats are applied.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps,
                     bool train) {
    const std::size_t c = x.dim(x.rank() - 1);
    if (gamma.dim(0) != c || beta.dim(0) != c || running_mean.dim(0) != c || running_var.dim(0) != c)
        throw ShapeError("batch_norm: parameter width does not match channels " + std::to_string(c));
    const std::size_t npos = x.numel() / c;
    if (train && npos < 2)
        throw NumericError("batch_norm: degenerate variance, train mode needs at least 2 positions");

    Tensor<T> out(x.shape());
    const T* xd = x.values().data();
    const T* gd = gamma.values().data();
    const T* bd = beta.values().data();
    T* od = out.values_mut().data();
    std::vector<T> mu(c), var(c), inv_std(c);

    if (train) {
        kern::row_block_reduce<T>(npos, c, mu.data(), [&](std::size_t r, T* acc) {
            const T* row = xd + r * c;
            for (std::size_t j = 0; j < c; ++j) acc[j] += row[j];
        });
        for (std::size_t j = 0; j < c; ++j) mu[j] /= static_cast<T>(npos);
        kern::row_block_reduce<T>(npos, c, var.data(), [&](std::size_t r, T* acc) {
            const T* row = xd + r * c;
            for (std::size_t j = 0; j < c; ++j) {
                const T d = row[j] - mu[j];
                acc[j] += d * d;
            }
        });
        for (std::size_t j = 0; j < c; ++j) {
            var[j] /= static_cast<T>(npos);
            inv_std[j] = T(1) / std::sqrt(var[j] + eps);
        }
        T* rm = running_mean.values_mut().data();
        T* rv = running_var.values_mut().data();
        for (std::size_t j = 0; j < c; ++j) {
            rm[j] = momentum * rm[j] + (T(1) - momentum) * mu[j];
            rv[j] = momentum * rv[j] + (T(1) - momentum) * var[j];
        }
    } else {
        const T* rm = running_mean.values().data();
        const T* rv = running_var.values().data();
        for (std::size_t j = 0; j < c; ++j) {
            mu[j] = rm[j];
            inv_std[j] = T(1) / std::sqrt(rv[j] + eps);
        }
    }

    std::vector<T> xhat(x.numel());
#pragma omp parallel for schedule(static) if (npos * c > 4096)
    for (idx_t i = 0; i < static_cast<idx_t>(npos); ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const std::size_t off = static_cast<std::size_t>(i) * c + j;
            const T xh = (xd[off] - mu[j]) * inv_std[j];
            xhat[off] = xh;
            od[off] = gd[j] * xh + bd[j];
        }
    detail::check_finite("batch_norm", out);

    if (detail::tracking(x, gamma, beta)) {
        Tensor<T> xc = x, gc = gamma, bc = beta, oc = out;
        detail::record<T>(
            [xc, gc, bc, oc, xhat = std::move(xhat), inv_std = std::move(inv_std), npos, c,
             train]() mutable {
                const T* g = oc.grad().data();
                const T* gd = gc.values().data();
                std::vector<T> sums(2 * c);
                kern::row_block_reduce<T>(npos, 2 * c, sums.data(), [&](std::size_t r, T* acc) {
                    const T* grow = g + r * c;
                    const T* xrow = xhat.data() + r * c;
                    for (std::size_t j = 0; j < c; ++j) {
                        acc[j] += grow[j];
                        acc[c + j] += grow[j] * xrow[j];
                    }
                });
                const T* sum_g = sums.data();
                const T* sum_gx = sums.data() + c;
                if (gc.grad_needed()) {
                    T* gg = gc.grad_mut().data();
                    for (std::size_t j = 0; j < c; ++j) gg[j] += sum_gx[j];
                }
                if (bc.grad_needed()) {
                    T* gb = bc.grad_mut().data();
                    for (std::size_t j = 0; j < c; ++j) gb[j] += sum_g[j];
                }
                if (xc.grad_needed()) {
                    T* gx = xc.grad_mut().data();
                    const T invn = T(1) / static_cast<T>(npos);
#pragma omp parallel for schedule(static) if (npos * c > 4096)
                    for (idx_t i = 0; i < static_cast<idx_t>(npos); ++i)
                        for (std::size_t j = 0; j < c; ++j) {
                            const std::size_t off = static_cast<std::size_t>(i) * c + j;
                            if (train)
                                gx[off] += gd[j] * inv_std[j] *
                                           (g[off] - sum_g[j] * invn - xhat[off] * sum_gx[j] * invn);
                            else
                                gx[off] += gd[j] * inv_std[j] * g[off];
                        }
                }
            },
            {x, gamma, beta}, out);
    }
    return out;
}

// Periodic shuffle: [N, C] -> [r*N, C/r], out[i*r + s, q] = in[i, s*(C/r) + q].
template <typename T>
Tensor<T> shuffle(const Tensor<T>& x, std::size_t r) {
    if (x.rank() != 2) throw ShapeError("shuffle: rank must be 2, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1);
    if (r == 0 || c % r != 0)
        throw ShapeError("shuffle: ratio " + std::to_string(r) + " does not divide channels " +
                         std::to_string(c));
    const std::size_t cr = c / r;
    Tensor<T> out(Shape{n * r, cr});
    const T* xd = x.values().data();
    T* od = out.values_mut().data();
#pragma omp parallel for schedule(static) if (n * c > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
        for (std::size_t s = 0; s < r; ++s)
            for (std::size_t q = 0; q < cr; ++q)
                od[(static_cast<std::size_t>(i) * r + s) * cr + q] = xd[static_cast<std::size_t>(i) * c + s * cr + q];
    detail::check_finite("shuffle", out);

    if (detail::tracking(x)) {
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc, n, c, r, cr]() mutable {
                if (!xc.grad_needed()) return;
                const T* g = oc.grad().data();
                T* gx = xc.grad_mut().data();
#pragma omp parallel for schedule(static) if (n * c > 16384)
                for (idx_t i = 0; i < static_cast<idx_t>(n); ++i)
                    for (std::size_t s = 0; s < r; ++s)
                        for (std::size_t q = 0; q < cr; ++q)
                            gx[static_cast<std::size_t>(i) * c + s * cr + q] += g[(static_cast<std::size_t>(i) * r + s) * cr + q];
            },
            {x}, out);
    }
    return out;
}

// Exact inverse of shuffle: [r*N, C] -> [N, r*C].
template <typename T>
Tensor<T> unshuffle(const Tensor<T>& x, std::size_t r) {
    if (x.rank() != 2) throw ShapeError("unshuffle: rank must be 2, got " + shape_str(x.shape()));
    const std::size_t rn = x.dim(0), cr = x.dim(1);
    if (r == 0 || rn % r != 0)
        throw ShapeError("unshuffle: ratio " + std::to_string(r) + " does not divide rows " +
                         std::to_string(rn));
    const std::size_t n = rn / r, c = cr * r;
    Tensor<T> out(Shape{n, c});
    const T* xd = x.values().data();
    T* od = out.values_mut().data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < r; ++s)
            for (std::size_t q = 0; q < cr; ++q) od[i * c + s * cr + q] = xd[(i * r + s) * cr + q];
    detail::check_finite("unshuffle", out);

    if (detail::tracking(x)) {
        Tensor<T> xc = x, oc = out;
        detail::record<T>(
            [xc, oc, n, c, r, cr]() mutable {
                if (!xc.grad_needed()) return;
                const T* g = oc.grad().data();
                T* gx = xc.grad_mut().data();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t s = 0; s < r; ++s)
                        for (std::size_t q = 0; q < cr; ++q)
                            gx[(i * r + s) * cr + q] += g[i * c + s * cr + q];
            },
            {x}, out);
    }
    return out;
}

}  // namespace putf::ops
