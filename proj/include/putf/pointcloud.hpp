#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "putf/error.hpp"
#include "putf/tensor.hpp"

namespace putf {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm_sq(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(norm_sq(a)); }
inline double dist_sq(const Vec3& a, const Vec3& b) { return norm_sq(a - b); }

// N x 3 coordinate set, N >= 1, all coordinates finite.
struct PointCloud {
    std::vector<Vec3> pts;

    PointCloud() = default;
    explicit PointCloud(std::vector<Vec3> p) : pts(std::move(p)) {}

    std::size_t size() const { return pts.size(); }
    const Vec3& operator[](std::size_t i) const { return pts[i]; }
    Vec3& operator[](std::size_t i) { return pts[i]; }

    Vec3 centroid() const {
        Vec3 c{0, 0, 0};
        for (const auto& p : pts) c = c + p;
        return c * (1.0 / static_cast<double>(pts.size()));
    }

    double max_radius_from(const Vec3& c) const {
        double r2 = 0;
        for (const auto& p : pts) r2 = std::max(r2, dist_sq(p, c));
        return std::sqrt(r2);
    }

    template <typename T>
    Tensor<T> to_tensor() const {
        std::vector<T> data(pts.size() * 3);
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (std::size_t j = 0; j < 3; ++j) data[i * 3 + j] = static_cast<T>(pts[i][j]);
        return Tensor<T>(Shape{pts.size(), 3}, std::move(data));
    }

    template <typename T>
    static PointCloud from_tensor(const Tensor<T>& t) {
        if (t.rank() != 2 || t.dim(1) != 3)
            throw ShapeError("point cloud tensor must be [N, 3], got " + shape_str(t.shape()));
        PointCloud c;
        c.pts.resize(t.dim(0));
        auto v = t.values();
        for (std::size_t i = 0; i < c.pts.size(); ++i)
            for (std::size_t j = 0; j < 3; ++j) c.pts[i][j] = static_cast<double>(v[i * 3 + j]);
        return c;
    }
};

// Row i lists the k nearest points to point i (3D Euclidean metric),
// ascending by (distance, index); entry 0 is i itself.
struct NeighborIndex {
    std::size_t n = 0, k = 0;
    std::vector<std::uint32_t> idx;  // n * k, row-major

    std::uint32_t at(std::size_t i, std::size_t j) const { return idx[i * k + j]; }
};

// One seed patch: parent indices, its unit-ball-normalized coordinates, and
// the transform that undoes the normalization (p_world = p_norm * scale + centroid).
struct Patch {
    std::vector<std::uint32_t> indices;
    PointCloud normalized;
    Vec3 centroid{0, 0, 0};
    double scale = 1.0;

    Vec3 denormalize(const Vec3& p) const { return p * scale + centroid; }
};

struct PatchSet {
    std::vector<Patch> patches;
};

}  // namespace putf
