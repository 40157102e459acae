// Timed comparison of the OpenMP kernels against their serial references.
// Build and run manually; this target is not part of the test suite.
//
//   ./build/bench/putf_bench [--reps N]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "putf/geometry.hpp"
#include "putf/kernels.hpp"
#include "putf/metrics.hpp"
#include "putf/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace putf;

namespace {

int g_reps = 5;

template <typename F>
double best_ms(F f) {
    double best = 1e300;
    for (int r = 0; r < g_reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const double ms =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() * 1e3;
        best = std::min(best, ms);
    }
    return best;
}

void row(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s %10.2f ms %12.2f ms %9.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

PointCloud random_cloud(std::size_t n, Rng& rng) {
    PointCloud c;
    c.pts.resize(n);
    for (auto& p : c.pts)
        p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--reps") == 0 && i + 1 < argc) g_reps = std::atoi(argv[i + 1]);

#ifdef _OPENMP
    std::printf("threads: %d, reps: %d (best-of)\n", omp_get_max_threads(), g_reps);
#else
    std::printf("threads: 1 (no OpenMP), reps: %d (best-of)\n", g_reps);
#endif
    std::printf("%-28s %13s %15s %10s\n", "kernel", "serial", "parallel", "speedup");

    Rng rng(1);

    {
        const std::size_t n = 256, m = 256, p = 256;
        std::vector<float> a(n * m), b(m * p), c(n * p);
        for (auto& v : a) v = static_cast<float>(rng.uniform(-1, 1));
        for (auto& v : b) v = static_cast<float>(rng.uniform(-1, 1));
        const double serial = best_ms([&] {
            for (int q = 0; q < 16; ++q) kern::serial::gemm(a.data(), b.data(), c.data(), n, m, p);
        });
        const double par = best_ms([&] {
            for (int q = 0; q < 16; ++q) kern::gemm(a.data(), b.data(), c.data(), n, m, p);
        });
        row("gemm f32 256^3 x16", serial, par);
        const double gf = 2.0 * n * m * p * 16 / (par * 1e-3) / 1e9;
        std::printf("%-28s %37.1f GFLOP/s\n", "  parallel throughput", gf);
    }

    {
        const std::size_t rows = 2048, cols = 512;
        std::vector<float> x(rows * cols), y(x.size());
        for (auto& v : x) v = static_cast<float>(rng.uniform(-4, 4));
        const double serial =
            best_ms([&] { kern::serial::softmax_rows(x.data(), y.data(), rows, cols); });
        const double par = best_ms([&] { kern::softmax_rows(x.data(), y.data(), rows, cols); });
        row("softmax 2048x512", serial, par);
    }

    {
        auto cloud = random_cloud(2048, rng);
        const double serial = best_ms([&] { serial::knn(cloud, 20); });
        const double par = best_ms([&] { knn(cloud, 20); });
        row("knn N=2048 k=20", serial, par);
    }

    {
        auto cloud = random_cloud(20480, rng);
        const double serial = best_ms([&] { serial::fps(cloud, 1024); });
        const double par = best_ms([&] { fps(cloud, 1024); });
        row("fps 20480 -> 1024", serial, par);
    }

    {
        auto a = random_cloud(8192, rng);
        auto b = random_cloud(2048, rng);
        const double serial = best_ms([&] { serial::chamfer_distance(a, b); });
        const double par = best_ms([&] { chamfer_distance(a, b); });
        row("chamfer 8192 vs 2048", serial, par);
    }

    return 0;
}
