#pragma once

#include <string>
#include <vector>

#include "putf/geometry.hpp"
#include "putf/metrics.hpp"
#include "putf/model.hpp"

namespace putf {

// Patch-based inference: cut the cloud into normalized seed patches covering
// every point, run the model on each patch in eval mode, undo each patch's
// normalization, and FPS-merge the union down to exactly r*N points.
template <typename T>
PointCloud upsample_cloud(const PointCloud& cloud, const ModelConfig& cfg, ModelParams<T>& params,
                          std::size_t patch_size, double coverage_factor = 3.0) {
    if (patch_size < cfg.k)
        throw ArgumentError("upsample: patch size " + std::to_string(patch_size) +
                            " is smaller than k = " + std::to_string(cfg.k));
    if (cloud.size() < patch_size)
        throw ArgumentError("upsample: cloud has " + std::to_string(cloud.size()) +
                            " points, fewer than the patch size " + std::to_string(patch_size));

    const PatchSet patches = extract_patches(cloud, patch_size, coverage_factor);
    std::vector<PointCloud> upsampled;
    upsampled.reserve(patches.patches.size());
    for (const auto& patch : patches.patches) {
        PointCloud dense = forward_cloud(patch.normalized, cfg, params, /*train=*/false);
        for (auto& p : dense.pts) p = patch.denormalize(p);
        upsampled.push_back(std::move(dense));
    }
    return merge_upsampled(upsampled, cloud.size() * cfg.r);
}

struct NoiseSweepRow {
    double beta = 0;
    MetricReport report;
};

// One upsample + evaluate run per noise level; beta = 0 reproduces the clean
// input bit for bit.
template <typename T>
std::vector<NoiseSweepRow> noise_sweep(const PointCloud& sparse, const PointCloud& gt,
                                       const SurfaceRef& surface, const ModelConfig& cfg,
                                       ModelParams<T>& params, std::size_t patch_size,
                                       const std::vector<double>& betas, std::uint64_t seed) {
    if (betas.empty()) throw ArgumentError("noise sweep: no noise levels given");
    std::vector<NoiseSweepRow> rows;
    rows.reserve(betas.size());
    for (double beta : betas) {
        const PointCloud noisy = add_noise(sparse, beta, seed);
        const PointCloud up = upsample_cloud(noisy, cfg, params, patch_size);
        rows.push_back({beta, evaluate(up, gt, surface)});
    }
    return rows;
}

std::string format_noise_table(const std::vector<NoiseSweepRow>& rows);

}  // namespace putf
