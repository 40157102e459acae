#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "putf/ops.hpp"
#include "putf/tensor.hpp"

namespace putf {

// Symmetric squared Chamfer training loss between two [*, 3] point tensors:
// mean over S of the squared distance to the closest point of T, plus the
// same in the other direction. The closest-point pairings are fixed during
// backward; gradients flow through the paired coordinates only.
template <typename T>
Tensor<T> chamfer_loss(const Tensor<T>& s, const Tensor<T>& t) {
    if (s.rank() != 2 || s.dim(1) != 3 || t.rank() != 2 || t.dim(1) != 3)
        throw ShapeError("chamfer_loss: expected [N, 3] tensors, got " + shape_str(s.shape()) +
                         " and " + shape_str(t.shape()));
    const std::size_t n = s.dim(0), m = t.dim(0);
    const T* sd = s.values().data();
    const T* td = t.values().data();

    auto nearest = [](const T* from, std::size_t nf, const T* to, std::size_t nt,
                      std::vector<std::uint32_t>& arg) {
        std::vector<T> dists(nf);
        arg.resize(nf);
#pragma omp parallel for schedule(static) if (nf * nt > 16384)
        for (kern::idx_t i = 0; i < static_cast<kern::idx_t>(nf); ++i) {
            const T* p = from + static_cast<std::size_t>(i) * 3;
            T best = std::numeric_limits<T>::infinity();
            std::uint32_t bj = 0;
            for (std::size_t j = 0; j < nt; ++j) {
                const T* q = to + j * 3;
                const T dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
                const T d = dx * dx + dy * dy + dz * dz;
                if (d < best) {
                    best = d;
                    bj = static_cast<std::uint32_t>(j);
                }
            }
            dists[static_cast<std::size_t>(i)] = best;
            arg[static_cast<std::size_t>(i)] = bj;
        }
        return dists;
    };

    std::vector<std::uint32_t> arg_st, arg_ts;
    const std::vector<T> d_st = nearest(sd, n, td, m, arg_st);
    const std::vector<T> d_ts = nearest(td, m, sd, n, arg_ts);
    const T term_st = kern::sum_deterministic(d_st.data(), n) / static_cast<T>(n);
    const T term_ts = kern::sum_deterministic(d_ts.data(), m) / static_cast<T>(m);
    Tensor<T> loss = Tensor<T>::scalar(term_st + term_ts);
    ops::detail::check_finite("chamfer_loss", loss);

    if (ops::detail::tracking(s, t)) {
        Tensor<T> sc = s, tc = t, lc = loss;
        ops::detail::record<T>(
            [sc, tc, lc, arg_st = std::move(arg_st), arg_ts = std::move(arg_ts), n, m]() mutable {
                const T g = lc.grad()[0];
                const T* sd = sc.values().data();
                const T* td = tc.values().data();
                const T wn = g * T(2) / static_cast<T>(n);
                const T wm = g * T(2) / static_cast<T>(m);
                T* gs = sc.grad_needed() ? sc.grad_mut().data() : nullptr;
                T* gt = tc.grad_needed() ? tc.grad_mut().data() : nullptr;
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t j = arg_st[i];
                    for (int a = 0; a < 3; ++a) {
                        const T diff = sd[i * 3 + a] - td[j * 3 + a];
                        if (gs) gs[i * 3 + a] += wn * diff;
                        if (gt) gt[j * 3 + a] -= wn * diff;
                    }
                }
                for (std::size_t j = 0; j < m; ++j) {
                    const std::size_t i = arg_ts[j];
                    for (int a = 0; a < 3; ++a) {
                        const T diff = td[j * 3 + a] - sd[i * 3 + a];
                        if (gt) gt[j * 3 + a] += wm * diff;
                        if (gs) gs[i * 3 + a] -= wm * diff;
                    }
                }
            },
            {s, t}, loss);
    }
    return loss;
}

}  // namespace putf
