#include "putf/geometry.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "putf/rng.hpp"

namespace putf {

namespace {

using std::size_t;
using idx_t = std::int64_t;

void check_cloud(const PointCloud& cloud, const char* op) {
    if (cloud.size() == 0) throw ArgumentError(std::string(op) + ": empty point cloud");
}

struct Cand {
    double d2;
    std::uint32_t i;
    bool operator<(const Cand& o) const { return d2 < o.d2 || (d2 == o.d2 && i < o.i); }
};

}  // namespace

NeighborIndex knn(const PointCloud& cloud, size_t k) {
    check_cloud(cloud, "knn");
    const size_t n = cloud.size();
    if (k == 0 || k > n)
        throw ArgumentError("knn: k = " + std::to_string(k) + " out of range for " +
                            std::to_string(n) + " points");
    NeighborIndex nbr;
    nbr.n = n;
    nbr.k = k;
    nbr.idx.resize(n * k);
#pragma omp parallel
    {
        std::vector<Cand> cand(n);
#pragma omp for schedule(static)
        for (idx_t i = 0; i < static_cast<idx_t>(n); ++i) {
            const Vec3& pi = cloud[static_cast<size_t>(i)];
            for (size_t j = 0; j < n; ++j)
                cand[j] = {dist_sq(pi, cloud[j]), static_cast<std::uint32_t>(j)};
            std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
            for (size_t j = 0; j < k; ++j) nbr.idx[static_cast<size_t>(i) * k + j] = cand[j].i;
        }
    }
    return nbr;
}

std::vector<std::uint32_t> nearest_indices(const PointCloud& cloud, const Vec3& query, size_t k) {
    check_cloud(cloud, "nearest_indices");
    const size_t n = cloud.size();
    if (k == 0 || k > n)
        throw ArgumentError("nearest_indices: k = " + std::to_string(k) + " out of range for " +
                            std::to_string(n) + " points");
    std::vector<Cand> cand(n);
    for (size_t j = 0; j < n; ++j)
        cand[j] = {dist_sq(query, cloud[j]), static_cast<std::uint32_t>(j)};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    std::vector<std::uint32_t> out(k);
    for (size_t j = 0; j < k; ++j) out[j] = cand[j].i;
    return out;
}

std::vector<std::uint32_t> fps(const PointCloud& cloud, size_t m, size_t start) {
    check_cloud(cloud, "fps");
    const size_t n = cloud.size();
    if (m == 0 || m > n)
        throw ArgumentError("fps: m = " + std::to_string(m) + " out of range for " +
                            std::to_string(n) + " points");
    if (start >= n) throw ArgumentError("fps: start index out of range");

    std::vector<std::uint32_t> picks;
    picks.reserve(m);
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<std::uint32_t> currents(m);
    currents[0] = static_cast<std::uint32_t>(start);
    picks.push_back(currents[0]);

    // Each round fuses the distance update with a chunk-local argmax; the
    // chunk winners combine under the total order (distance, -index), so the
    // result does not depend on the thread count. Each thread keeps its slice
    // of dist[] warm across rounds.
    struct Best {
        double d;
        std::uint32_t i;
    };
    std::vector<Best> winners;
#pragma omp parallel if (n > 4096)
    {
#ifdef _OPENMP
        const int tid = omp_get_thread_num();
        const int nthreads = omp_get_num_threads();
#else
        const int tid = 0;
        const int nthreads = 1;
#endif
#pragma omp single
        winners.assign(static_cast<size_t>(nthreads), Best{-1.0, 0});
        const size_t chunk = (n + static_cast<size_t>(nthreads) - 1) / static_cast<size_t>(nthreads);
        const size_t lo = std::min(n, chunk * static_cast<size_t>(tid));
        const size_t hi = std::min(n, lo + chunk);

        for (size_t round = 1; round < m; ++round) {
            const Vec3 p = cloud[currents[round - 1]];
            Best local{-1.0, 0};
            for (size_t j = lo; j < hi; ++j) {
                const double d = std::min(dist[j], dist_sq(p, cloud[j]));
                dist[j] = d;
                if (d > local.d) local = {d, static_cast<std::uint32_t>(j)};
            }
            winners[static_cast<size_t>(tid)] = local;
#pragma omp barrier
#pragma omp single
            {
                Best best{-1.0, 0};
                for (const Best& w : winners)
                    if (w.d > best.d || (w.d == best.d && w.i < best.i)) best = w;
                currents[round] = best.i;
                picks.push_back(best.i);
            }
        }
    }
    return picks;
}

Patch normalize_points(const PointCloud& cloud, std::vector<std::uint32_t> indices) {
    Patch patch;
    patch.indices = std::move(indices);
    patch.normalized.pts.resize(patch.indices.size());
    Vec3 c{0, 0, 0};
    for (auto i : patch.indices) c = c + cloud[i];
    c = c * (1.0 / static_cast<double>(patch.indices.size()));
    double r2 = 0;
    for (auto i : patch.indices) r2 = std::max(r2, dist_sq(cloud[i], c));
    double scale = std::sqrt(r2);
    if (scale < 1e-12) scale = 1.0;  // all points coincide
    patch.centroid = c;
    patch.scale = scale;
    const double inv = 1.0 / scale;
    for (size_t j = 0; j < patch.indices.size(); ++j)
        patch.normalized.pts[j] = (cloud[patch.indices[j]] - c) * inv;
    return patch;
}

PatchSet extract_patches(const PointCloud& cloud, size_t patch_size, double coverage_factor) {
    check_cloud(cloud, "extract_patches");
    const size_t n = cloud.size();
    if (patch_size == 0 || patch_size > n)
        throw ArgumentError("extract_patches: patch size " + std::to_string(patch_size) +
                            " out of range for " + std::to_string(n) + " points");
    if (coverage_factor <= 0) throw ArgumentError("extract_patches: coverage factor must be positive");

    size_t n_seeds = static_cast<size_t>(
        std::ceil(static_cast<double>(n) * coverage_factor / static_cast<double>(patch_size)));
    n_seeds = std::max<size_t>(1, std::min(n_seeds, n));
    if (patch_size == n) n_seeds = 1;  // one patch already holds every point

    PatchSet set;
    std::vector<bool> covered(n, false);
    auto add_patch = [&](const Vec3& seed) {
        auto indices = nearest_indices(cloud, seed, patch_size);
        for (auto i : indices) covered[i] = true;
        set.patches.push_back(normalize_points(cloud, std::move(indices)));
    };

    for (auto s : fps(cloud, n_seeds)) add_patch(cloud[s]);
    for (size_t i = 0; i < n; ++i)
        if (!covered[i]) add_patch(cloud[i]);
    return set;
}

PointCloud merge_upsampled(const std::vector<PointCloud>& patches, size_t target) {
    size_t total = 0;
    for (const auto& p : patches) total += p.size();
    if (total < target)
        throw ArgumentError("merge_upsampled: " + std::to_string(total) +
                            " candidate points < target " + std::to_string(target));
    PointCloud combined;
    combined.pts.reserve(total);
    for (const auto& p : patches) combined.pts.insert(combined.pts.end(), p.pts.begin(), p.pts.end());
    PointCloud out;
    out.pts.reserve(target);
    for (auto i : fps(combined, target)) out.pts.push_back(combined[i]);
    return out;
}

PointCloud add_noise(const PointCloud& cloud, double beta, std::uint64_t seed) {
    check_cloud(cloud, "add_noise");
    if (beta < 0) throw ArgumentError("add_noise: beta must be non-negative");
    if (beta == 0.0) return cloud;
    Rng rng(seed);
    PointCloud out = cloud;
    for (auto& p : out.pts)
        for (int a = 0; a < 3; ++a) p[a] += beta * rng.normal();
    return out;
}

namespace serial {

NeighborIndex knn(const PointCloud& cloud, size_t k) {
    check_cloud(cloud, "knn");
    const size_t n = cloud.size();
    if (k == 0 || k > n) throw ArgumentError("knn: k out of range");
    NeighborIndex nbr;
    nbr.n = n;
    nbr.k = k;
    nbr.idx.resize(n * k);
    std::vector<Cand> cand(n);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j)
            cand[j] = {dist_sq(cloud[i], cloud[j]), static_cast<std::uint32_t>(j)};
        std::sort(cand.begin(), cand.end());
        for (size_t j = 0; j < k; ++j) nbr.idx[i * k + j] = cand[j].i;
    }
    return nbr;
}

std::vector<std::uint32_t> fps(const PointCloud& cloud, size_t m, size_t start) {
    check_cloud(cloud, "fps");
    const size_t n = cloud.size();
    if (m == 0 || m > n) throw ArgumentError("fps: m out of range");
    if (start >= n) throw ArgumentError("fps: start index out of range");
    std::vector<std::uint32_t> picks{static_cast<std::uint32_t>(start)};
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    while (picks.size() < m) {
        const Vec3 p = cloud[picks.back()];
        for (size_t j = 0; j < n; ++j) dist[j] = std::min(dist[j], dist_sq(p, cloud[j]));
        size_t best = 0;
        double best_d = -1.0;
        for (size_t j = 0; j < n; ++j)
            if (dist[j] > best_d) {
                best_d = dist[j];
                best = j;
            }
        picks.push_back(static_cast<std::uint32_t>(best));
    }
    return picks;
}

}  // namespace serial

}  // namespace putf
