#include "putf/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>

#include "putf/error.hpp"

namespace putf {

namespace {

using idx_t = std::int64_t;

void check_nonempty(const PointCloud& c, const char* what) {
    if (c.size() == 0) throw ArgumentError(std::string(what) + ": empty point set");
}

// For each point of `from`, Euclidean distance to its nearest point of `to`.
std::vector<double> nearest_dists(const PointCloud& from, const PointCloud& to) {
    std::vector<double> out(from.size());
#pragma omp parallel for schedule(static) if (from.size() * to.size() > 16384)
    for (idx_t i = 0; i < static_cast<idx_t>(from.size()); ++i) {
        const Vec3& p = from[static_cast<std::size_t>(i)];
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < to.size(); ++j) best = std::min(best, dist_sq(p, to[j]));
        out[static_cast<std::size_t>(i)] = std::sqrt(best);
    }
    return out;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double max_of(const std::vector<double>& xs) {
    double m = 0;
    for (double x : xs) m = std::max(m, x);
    return m;
}

std::string fmt(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

}  // namespace

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
    check_nonempty(a, "chamfer_distance");
    check_nonempty(b, "chamfer_distance");
    return 0.5 * (mean_of(nearest_dists(a, b)) + mean_of(nearest_dists(b, a)));
}

double hausdorff_distance(const PointCloud& a, const PointCloud& b) {
    check_nonempty(a, "hausdorff_distance");
    check_nonempty(b, "hausdorff_distance");
    return std::max(max_of(nearest_dists(a, b)), max_of(nearest_dists(b, a)));
}

double p2f_distance(const PointCloud& cloud, const SurfaceRef& surface) {
    check_nonempty(cloud, "p2f_distance");
    surface.validate();
    std::vector<double> d(cloud.size());
#pragma omp parallel for schedule(static) if (cloud.size() > 64)
    for (idx_t i = 0; i < static_cast<idx_t>(cloud.size()); ++i)
        d[static_cast<std::size_t>(i)] = surface.distance(cloud[static_cast<std::size_t>(i)]);
    return mean_of(d);
}

MetricReport evaluate(const PointCloud& pred, const PointCloud& gt, const SurfaceRef& surface) {
    MetricReport r;
    r.cd = chamfer_distance(pred, gt) * 1e3;
    r.hd = hausdorff_distance(pred, gt) * 1e3;
    r.p2f = p2f_distance(pred, surface) * 1e3;
    r.n_pred = pred.size();
    r.n_gt = gt.size();
    return r;
}

std::string MetricReport::line() const {
    return "cd_e-3=" + fmt(cd) + " hd_e-3=" + fmt(hd) + " p2f_e-3=" + fmt(p2f) +
           " n_pred=" + std::to_string(n_pred) + " n_gt=" + std::to_string(n_gt);
}

std::string MetricReport::block() const {
    return "cd_e-3=" + fmt(cd) + "\nhd_e-3=" + fmt(hd) + "\np2f_e-3=" + fmt(p2f) +
           "\nn_pred=" + std::to_string(n_pred) + "\nn_gt=" + std::to_string(n_gt) + "\n";
}

namespace serial {

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
    check_nonempty(a, "chamfer_distance");
    check_nonempty(b, "chamfer_distance");
    double sum_ab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b.size(); ++j) best = std::min(best, dist_sq(a[i], b[j]));
        sum_ab += std::sqrt(best);
    }
    double sum_ba = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < a.size(); ++i) best = std::min(best, dist_sq(a[i], b[j]));
        sum_ba += std::sqrt(best);
    }
    return 0.5 * (sum_ab / static_cast<double>(a.size()) + sum_ba / static_cast<double>(b.size()));
}

double hausdorff_distance(const PointCloud& a, const PointCloud& b) {
    check_nonempty(a, "hausdorff_distance");
    check_nonempty(b, "hausdorff_distance");
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b.size(); ++j) best = std::min(best, dist_sq(a[i], b[j]));
        worst = std::max(worst, best);
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < a.size(); ++i) best = std::min(best, dist_sq(a[i], b[j]));
        worst = std::max(worst, best);
    }
    return std::sqrt(worst);
}

}  // namespace serial

}  // namespace putf
