#pragma once

#include <string>

#include "putf/pointcloud.hpp"
#include "putf/surfaces.hpp"

namespace putf {

// Evaluation record; metric fields are in 1e-3 units as reported.
struct MetricReport {
    double cd = 0;
    double hd = 0;
    double p2f = 0;
    std::size_t n_pred = 0;
    std::size_t n_gt = 0;

    // "cd_e-3=<v> hd_e-3=<v> p2f_e-3=<v> n_pred=<n> n_gt=<n>"
    std::string line() const;
    // Same fields, one per line.
    std::string block() const;
};

// Evaluation Chamfer distance: mean Euclidean closest-point distance,
// averaged over both directions (factor 1/2). Raw input units.
double chamfer_distance(const PointCloud& a, const PointCloud& b);

// max(max_a min_b ||a-b||, max_b min_a ||a-b||).
double hausdorff_distance(const PointCloud& a, const PointCloud& b);

// Mean distance from each point to the reference surface.
double p2f_distance(const PointCloud& cloud, const SurfaceRef& surface);

// CD/HD/P2F scaled to 1e-3 units.
MetricReport evaluate(const PointCloud& pred, const PointCloud& gt, const SurfaceRef& surface);

namespace serial {
// Plain nested-loop references.
double chamfer_distance(const PointCloud& a, const PointCloud& b);
double hausdorff_distance(const PointCloud& a, const PointCloud& b);
}  // namespace serial

}  // namespace putf
