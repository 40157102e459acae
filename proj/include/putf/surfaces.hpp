#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "putf/pointcloud.hpp"
#include "putf/rng.hpp"

namespace putf {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;
};

// Ground-truth surface for sampling and point-to-surface distance. Parametric
// kinds have closed-form (sphere, torus, cylinder) or iteratively projected
// (bump height field) distances; meshes use exact point-triangle minima.
struct SurfaceRef {
    enum class Kind { Sphere, Torus, Cylinder, Bump, Mesh };

    Kind kind = Kind::Sphere;
    Vec3 center{0, 0, 0};   // sphere
    double radius = 1.0;    // sphere R, torus major R, cylinder R
    double minor = 0.4;     // torus tube radius
    double height = 2.0;    // cylinder full height (caps excluded)
    double amp = 0.2;       // bump: z = amp * sin(fx*x) * sin(fy*y)
    double fx = 3.0, fy = 3.0;
    double half = 1.0;      // bump domain [-half, half]^2
    std::shared_ptr<TriMesh> mesh;
    std::string mesh_path;
    std::shared_ptr<std::vector<double>> mesh_cum_areas;  // built once in from_mesh

    void validate() const;
    double distance(const Vec3& p) const;
    Vec3 sample(Rng& rng) const;

    // Round-trippable compact form for manifest files ("torus:R=1,rho=0.4").
    std::string spec_string() const;
    static SurfaceRef parse(const std::string& spec);

    static SurfaceRef sphere(double r = 1.0, Vec3 c = {0, 0, 0});
    static SurfaceRef torus(double major = 1.0, double tube = 0.4);
    static SurfaceRef cylinder(double r = 1.0, double h = 2.0);
    static SurfaceRef bump(double amp = 0.2, double fx = 3.0, double fy = 3.0, double half = 1.0);
    static SurfaceRef from_mesh(std::shared_ptr<TriMesh> mesh, std::string path = {});
};

// Exact closest distance from a point to a triangle.
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Minimal OBJ reader: 'v' and (fan-triangulated) 'f' records only.
TriMesh load_obj(const std::string& path);

}  // namespace putf
