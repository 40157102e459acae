#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "putf/pointcloud.hpp"
#include "putf/surfaces.hpp"

namespace putf {

// One training/evaluation pair: a sparse input and its r-times denser
// ground truth, both sampled from the same surface.
struct SampleRecord {
    PointCloud sparse;
    PointCloud dense;
    SurfaceRef surface;
    std::string id;
};

// Per sample: draw 20*r*n_in area-uniform surface points, FPS down to the
// r*n_in dense ground truth, FPS that down to the n_in sparse input (the
// sparse set is a subset of the dense one). Deterministic per seed; sample i
// uses shapes[i % shapes.size()].
std::vector<SampleRecord> generate_dataset(const std::vector<SurfaceRef>& shapes, std::size_t n_in,
                                           std::size_t r, std::size_t count, std::uint64_t seed);

// Directory layout: <id>_sparse.xyz, <id>_dense.xyz, plus manifest.txt with
// lines "<id> <sparse-file> <dense-file> <surface-spec>".
void save_dataset(const std::vector<SampleRecord>& samples, const std::string& dir);
std::vector<SampleRecord> load_dataset(const std::string& dir);

}  // namespace putf
