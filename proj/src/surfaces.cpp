#include "putf/surfaces.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "putf/error.hpp"

namespace putf {

namespace {

constexpr double kPi = std::numbers::pi;

double parse_double(const std::string& s, const std::string& what) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ArgumentError("surface spec: bad number '" + s + "' for " + what);
    return v;
}

std::string fmt(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

// Height field helpers for the bump surface.
struct BumpField {
    double amp, fx, fy;
    double z(double u, double v) const { return amp * std::sin(fx * u) * std::sin(fy * v); }
    double zu(double u, double v) const { return amp * fx * std::cos(fx * u) * std::sin(fy * v); }
    double zv(double u, double v) const { return amp * fy * std::sin(fx * u) * std::cos(fy * v); }
};

}  // namespace

SurfaceRef SurfaceRef::sphere(double r, Vec3 c) {
    SurfaceRef s;
    s.kind = Kind::Sphere;
    s.radius = r;
    s.center = c;
    return s;
}

SurfaceRef SurfaceRef::torus(double major, double tube) {
    SurfaceRef s;
    s.kind = Kind::Torus;
    s.radius = major;
    s.minor = tube;
    return s;
}

SurfaceRef SurfaceRef::cylinder(double r, double h) {
    SurfaceRef s;
    s.kind = Kind::Cylinder;
    s.radius = r;
    s.height = h;
    return s;
}

SurfaceRef SurfaceRef::bump(double amp, double fx, double fy, double half) {
    SurfaceRef s;
    s.kind = Kind::Bump;
    s.amp = amp;
    s.fx = fx;
    s.fy = fy;
    s.half = half;
    return s;
}

SurfaceRef SurfaceRef::from_mesh(std::shared_ptr<TriMesh> mesh, std::string path) {
    SurfaceRef s;
    s.kind = Kind::Mesh;
    s.mesh = std::move(mesh);
    s.mesh_path = std::move(path);
    s.mesh_cum_areas = std::make_shared<std::vector<double>>();
    double acc = 0;
    for (const auto& fc : s.mesh->faces) {
        const Vec3& a = s.mesh->vertices[fc[0]];
        const Vec3& b = s.mesh->vertices[fc[1]];
        const Vec3& c = s.mesh->vertices[fc[2]];
        acc += 0.5 * norm(cross(b - a, c - a));
        s.mesh_cum_areas->push_back(acc);
    }
    return s;
}

void SurfaceRef::validate() const {
    switch (kind) {
        case Kind::Sphere:
            if (radius <= 0) throw ArgumentError("sphere: radius must be positive");
            break;
        case Kind::Torus:
            if (radius <= 0 || minor <= 0 || minor >= radius)
                throw ArgumentError("torus: need 0 < rho < R");
            break;
        case Kind::Cylinder:
            if (radius <= 0 || height <= 0) throw ArgumentError("cylinder: R and h must be positive");
            break;
        case Kind::Bump:
            if (half <= 0) throw ArgumentError("bump: half extent must be positive");
            break;
        case Kind::Mesh: {
            if (!mesh || mesh->faces.empty()) throw ArgumentError("mesh: no triangles");
            for (const auto& f : mesh->faces) {
                const Vec3& a = mesh->vertices[f[0]];
                const Vec3& b = mesh->vertices[f[1]];
                const Vec3& c = mesh->vertices[f[2]];
                if (0.5 * norm(cross(b - a, c - a)) <= 1e-12)
                    throw ArgumentError("mesh: degenerate triangle");
            }
            break;
        }
    }
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Closest point on triangle via barycentric region tests.
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0 && d2 <= 0) return norm(ap);

    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0 && d4 <= d3) return norm(bp);

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        const double v = d1 / (d1 - d3);
        return norm(p - (a + ab * v));
    }

    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0 && d5 <= d6) return norm(cp);

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
        const double w = d2 / (d2 - d6);
        return norm(p - (a + ac * w));
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return norm(p - (b + (c - b) * w));
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return norm(p - (a + ab * v + ac * w));
}

double SurfaceRef::distance(const Vec3& p) const {
    switch (kind) {
        case Kind::Sphere:
            return std::abs(norm(p - center) - radius);
        case Kind::Torus: {
            const double ring = std::sqrt(p[0] * p[0] + p[1] * p[1]) - radius;
            return std::abs(std::sqrt(ring * ring + p[2] * p[2]) - minor);
        }
        case Kind::Cylinder: {
            const double rad = std::sqrt(p[0] * p[0] + p[1] * p[1]);
            const double hh = 0.5 * height;
            if (std::abs(p[2]) <= hh) return std::abs(rad - radius);
            const double dz = std::abs(p[2]) - hh;
            const double dr = rad - radius;
            return std::sqrt(dr * dr + dz * dz);  // distance to the rim circle
        }
        case Kind::Bump: {
            // Coarse grid scan plus projected gradient refinement of
            // |p - (u, v, z(u,v))|^2 over the clamped domain.
            const BumpField f{amp, fx, fy};
            auto d2at = [&](double u, double v) {
                const double du = p[0] - u, dv = p[1] - v, dz = p[2] - f.z(u, v);
                return du * du + dv * dv + dz * dz;
            };
            double bu = std::clamp(p[0], -half, half);
            double bv = std::clamp(p[1], -half, half);
            double best = d2at(bu, bv);
            const int grid = 24;
            for (int i = 0; i <= grid; ++i)
                for (int j = 0; j <= grid; ++j) {
                    const double u = -half + 2.0 * half * i / grid;
                    const double v = -half + 2.0 * half * j / grid;
                    const double d = d2at(u, v);
                    if (d < best) {
                        best = d;
                        bu = u;
                        bv = v;
                    }
                }
            double step = half / grid;
            for (int it = 0; it < 100; ++it) {
                const double gu = -2 * (p[0] - bu) - 2 * (p[2] - f.z(bu, bv)) * f.zu(bu, bv);
                const double gv = -2 * (p[1] - bv) - 2 * (p[2] - f.z(bu, bv)) * f.zv(bu, bv);
                double nu = std::clamp(bu - step * gu, -half, half);
                double nv = std::clamp(bv - step * gv, -half, half);
                const double d = d2at(nu, nv);
                if (d < best) {
                    best = d;
                    bu = nu;
                    bv = nv;
                } else {
                    step *= 0.5;
                    if (step < 1e-12) break;
                }
            }
            return std::sqrt(best);
        }
        case Kind::Mesh: {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& fc : mesh->faces)
                best = std::min(best, point_triangle_distance(p, mesh->vertices[fc[0]],
                                                              mesh->vertices[fc[1]],
                                                              mesh->vertices[fc[2]]));
            return best;
        }
    }
    throw ArgumentError("surface: unknown kind");
}

Vec3 SurfaceRef::sample(Rng& rng) const {
    switch (kind) {
        case Kind::Sphere: {
            // Uniform direction from three normals.
            while (true) {
                Vec3 g{rng.normal(), rng.normal(), rng.normal()};
                const double n = norm(g);
                if (n > 1e-12) return center + g * (radius / n);
            }
        }
        case Kind::Torus: {
            // Area-uniform: reject the tube angle with weight (R + rho*cos v).
            const double u = rng.uniform(0, 2 * kPi);
            double v;
            while (true) {
                v = rng.uniform(0, 2 * kPi);
                if (rng.uniform() * (radius + minor) <= radius + minor * std::cos(v)) break;
            }
            const double ring = radius + minor * std::cos(v);
            return {ring * std::cos(u), ring * std::sin(u), minor * std::sin(v)};
        }
        case Kind::Cylinder: {
            const double th = rng.uniform(0, 2 * kPi);
            const double z = rng.uniform(-0.5 * height, 0.5 * height);
            return {radius * std::cos(th), radius * std::sin(th), z};
        }
        case Kind::Bump: {
            // Rejection on the area element sqrt(1 + zu^2 + zv^2).
            const BumpField f{amp, fx, fy};
            const double bound = std::sqrt(1.0 + amp * fx * amp * fx + amp * fy * amp * fy);
            while (true) {
                const double u = rng.uniform(-half, half);
                const double v = rng.uniform(-half, half);
                const double zu = f.zu(u, v), zv = f.zv(u, v);
                if (rng.uniform() * bound <= std::sqrt(1.0 + zu * zu + zv * zv))
                    return {u, v, f.z(u, v)};
            }
        }
        case Kind::Mesh: {
            // Area-weighted triangle pick, uniform barycentric point.
            const auto& areas = *mesh_cum_areas;
            const double t = rng.uniform() * areas.back();
            const std::size_t fi = static_cast<std::size_t>(
                std::lower_bound(areas.begin(), areas.end(), t) - areas.begin());
            const auto& fc = mesh->faces[std::min(fi, mesh->faces.size() - 1)];
            double s = std::sqrt(rng.uniform());
            double w = rng.uniform();
            const Vec3& a = mesh->vertices[fc[0]];
            const Vec3& b = mesh->vertices[fc[1]];
            const Vec3& c = mesh->vertices[fc[2]];
            return a * (1 - s) + b * (s * (1 - w)) + c * (s * w);
        }
    }
    throw ArgumentError("surface: unknown kind");
}

std::string SurfaceRef::spec_string() const {
    switch (kind) {
        case Kind::Sphere: {
            std::string s = "sphere:R=" + fmt(radius);
            if (center != Vec3{0, 0, 0})
                s += ",cx=" + fmt(center[0]) + ",cy=" + fmt(center[1]) + ",cz=" + fmt(center[2]);
            return s;
        }
        case Kind::Torus:
            return "torus:R=" + fmt(radius) + ",rho=" + fmt(minor);
        case Kind::Cylinder:
            return "cylinder:R=" + fmt(radius) + ",h=" + fmt(height);
        case Kind::Bump:
            return "bump:amp=" + fmt(amp) + ",fx=" + fmt(fx) + ",fy=" + fmt(fy) + ",half=" + fmt(half);
        case Kind::Mesh:
            return "mesh:" + mesh_path;
    }
    throw ArgumentError("surface: unknown kind");
}

SurfaceRef SurfaceRef::parse(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);

    if (name == "mesh") {
        if (args.empty()) throw ArgumentError("surface spec: mesh requires a path");
        auto m = std::make_shared<TriMesh>(load_obj(args));
        auto s = from_mesh(std::move(m), args);
        s.validate();
        return s;
    }

    SurfaceRef s;
    if (name == "sphere")
        s = sphere();
    else if (name == "torus")
        s = torus();
    else if (name == "cylinder")
        s = cylinder();
    else if (name == "bump")
        s = bump();
    else
        throw ArgumentError("surface spec: unknown kind '" + name + "'");

    std::stringstream ss(args);
    std::string kv;
    while (std::getline(ss, kv, ',')) {
        if (kv.empty()) continue;
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ArgumentError("surface spec: expected key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const double val = parse_double(kv.substr(eq + 1), key);
        if (key == "R")
            s.radius = val;
        else if (key == "rho")
            s.minor = val;
        else if (key == "h")
            s.height = val;
        else if (key == "amp")
            s.amp = val;
        else if (key == "fx")
            s.fx = val;
        else if (key == "fy")
            s.fy = val;
        else if (key == "half")
            s.half = val;
        else if (key == "cx")
            s.center[0] = val;
        else if (key == "cy")
            s.center[1] = val;
        else if (key == "cz")
            s.center[2] = val;
        else
            throw ArgumentError("surface spec: unknown key '" + key + "'");
    }
    s.validate();
    return s;
}

TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open OBJ file: " + path);
    TriMesh mesh;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::stringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v[0] >> v[1] >> v[2])) throw ParseError("OBJ: bad vertex", line_no);
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<std::uint32_t> poly;
            std::string tok;
            while (ss >> tok) {
                // "i", "i/t", "i/t/n" forms; only the vertex index is used
                const auto slash = tok.find('/');
                long vi = 0;
                const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                try {
                    vi = std::stol(head);
                } catch (...) {
                    throw ParseError("OBJ: bad face index '" + tok + "'", line_no);
                }
                if (vi < 1 || static_cast<std::size_t>(vi) > mesh.vertices.size())
                    throw ParseError("OBJ: face index out of range", line_no);
                poly.push_back(static_cast<std::uint32_t>(vi - 1));
            }
            if (poly.size() < 3) throw ParseError("OBJ: face needs 3+ vertices", line_no);
            for (std::size_t i = 1; i + 1 < poly.size(); ++i)
                mesh.faces.push_back({poly[0], poly[i], poly[i + 1]});
        }
    }
    if (mesh.faces.empty()) throw ParseError("OBJ: no faces found", line_no);
    return mesh;
}

}  // namespace putf
