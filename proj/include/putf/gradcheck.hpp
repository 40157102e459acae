#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "putf/tensor.hpp"

namespace putf {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    double tol = 0.0;
    std::vector<GradCheckEntry> entries;
    bool passed() const { return max_rel_err < tol; }
    bool pass(double t) const { return max_rel_err < t; }
    const GradCheckEntry& worst() const {
        const GradCheckEntry* w = &entries.front();
        for (const auto& e : entries)
            if (e.max_rel_err > w->max_rel_err) w = &e;
        return *w;
    }
};

// err = |g - fd| / max(1, |g|, |fd|): relative at scale, absolute below 1.
inline double grad_rel_err(double g, double fd) {
    double denom = 1.0;
    if (std::abs(g) > denom) denom = std::abs(g);
    if (std::abs(fd) > denom) denom = std::abs(fd);
    return std::abs(g - fd) / denom;
}

// Compares the tape gradient of a deterministic scalar function against
// central differences, elementwise, for every named input. The function is
// evaluated once under a tape for the analytic gradients, then re-evaluated
// tape-free around each perturbed element. Intended for the 64-bit build of
// the graph; 32-bit differences are dominated by roundoff.
template <typename T, typename F>
GradCheckReport grad_check(F f, std::vector<std::pair<std::string, Tensor<T>>> inputs, T h,
                           double tol) {
    GradCheckReport report;
    std::vector<std::vector<T>> analytic;
    {
        Tape<T> tape;
        TapeScope<T> scope(tape);
        for (auto& [name, t] : inputs) {
            t.set_requires_grad(true);
            t.zero_grad();
        }
        Tensor<T> loss = f();
        if (!std::isfinite(static_cast<double>(loss.item())))
            throw NumericError("grad_check: non-finite loss");
        tape.backward(loss);
        for (auto& [name, t] : inputs) {
            auto g = t.grad();
            analytic.emplace_back(g.begin(), g.end());
        }
    }

    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        auto& [name, t] = inputs[ti];
        GradCheckEntry entry;
        entry.name = name;
        auto vals = t.values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const T orig = vals[i];
            vals[i] = orig + h;
            const double fp = static_cast<double>(f().item());
            vals[i] = orig - h;
            const double fm = static_cast<double>(f().item());
            vals[i] = orig;
            const double fd = (fp - fm) / (2.0 * static_cast<double>(h));
            const double g = static_cast<double>(analytic[ti][i]);
            const double err = grad_rel_err(g, fd);
            if (err >= entry.max_rel_err) {
                entry.max_rel_err = err;
                entry.worst_index = i;
                entry.analytic = g;
                entry.numeric = fd;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    report.tol = tol;
    return report;
}

}  // namespace putf
