#pragma once

#include <cstdint>
#include <vector>

#include "putf/pointcloud.hpp"

namespace putf {

// Exact brute-force k nearest neighbors, ties broken by lower index. Row i is
// sorted ascending by (squared distance, index) and starts with i itself.
NeighborIndex knn(const PointCloud& cloud, std::size_t k);

// Greedy farthest point sampling: first pick is `start`, each following pick
// maximizes the distance to the selected set, ties to the lower index.
std::vector<std::uint32_t> fps(const PointCloud& cloud, std::size_t m, std::size_t start = 0);

// The k indices nearest to an arbitrary query position (same ordering rule).
std::vector<std::uint32_t> nearest_indices(const PointCloud& cloud, const Vec3& query,
                                           std::size_t k);

// Cuts the cloud into FPS-seeded patches of `patch_size` nearest neighbors,
// ceil(N * coverage_factor / patch_size) seeds plus backfill seeds at any
// point left uncovered. Every patch is normalized into the unit ball.
PatchSet extract_patches(const PointCloud& cloud, std::size_t patch_size,
                         double coverage_factor = 3.0);

// Concatenates de-normalized patch outputs and FPS-selects exactly `target` points.
PointCloud merge_upsampled(const std::vector<PointCloud>& patches, std::size_t target);

// p' = p + beta * g with g ~ N(0,1) i.i.d. per coordinate, seeded.
PointCloud add_noise(const PointCloud& cloud, double beta, std::uint64_t seed);

// Unit-ball normalization shared by patch extraction and the training loop.
Patch normalize_points(const PointCloud& cloud, std::vector<std::uint32_t> indices);

namespace serial {
// Reference implementations: full pairwise sort for knn, plain loops for fps.
NeighborIndex knn(const PointCloud& cloud, std::size_t k);
std::vector<std::uint32_t> fps(const PointCloud& cloud, std::size_t m, std::size_t start = 0);
}  // namespace serial

}  // namespace putf
