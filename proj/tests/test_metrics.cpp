#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "putf/gradcheck.hpp"
#include "putf/loss.hpp"
#include "putf/metrics.hpp"
#include "putf/rng.hpp"

using namespace putf;

namespace {

PointCloud random_cloud(std::size_t n, Rng& rng) {
    PointCloud c;
    c.pts.resize(n);
    for (auto& p : c.pts)
        p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    return c;
}

Tensor<double> cloud_tensor(const PointCloud& c) { return c.to_tensor<double>(); }

// Rotation about an axis by angle, plus translation.
PointCloud rigid(const PointCloud& c, double angle, const Vec3& t) {
    const double ca = std::cos(angle), sa = std::sin(angle);
    PointCloud out;
    out.pts.reserve(c.size());
    for (const auto& p : c.pts)
        out.pts.push_back({ca * p[0] - sa * p[1] + t[0], sa * p[0] + ca * p[1] + t[1], p[2] + t[2]});
    return out;
}

}  // namespace

TEST_CASE("chamfer_loss simple cases") {
    Tensor<double> s(Shape{2, 3}, {0, 0, 0, 1, 1, 1});
    auto zero = chamfer_loss(s, s);
    CHECK(zero.item() == 0.0);

    Tensor<double> a(Shape{1, 3}, {0, 0, 0});
    Tensor<double> b(Shape{1, 3}, {1, 0, 0});
    CHECK(chamfer_loss(a, b).item() == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("chamfer_loss matches double-loop oracle") {
    Rng rng(401);
    auto s = random_cloud(16, rng);
    auto t = random_cloud(24, rng);
    const double got = chamfer_loss(cloud_tensor(s), cloud_tensor(t)).item();
    double term1 = 0;
    for (const auto& p : s.pts) {
        double best = 1e300;
        for (const auto& q : t.pts) best = std::min(best, dist_sq(p, q));
        term1 += best;
    }
    double term2 = 0;
    for (const auto& q : t.pts) {
        double best = 1e300;
        for (const auto& p : s.pts) best = std::min(best, dist_sq(p, q));
        term2 += best;
    }
    const double expect = term1 / 16 + term2 / 24;
    CHECK(std::abs(got - expect) < 1e-12);
}

TEST_CASE("chamfer_loss gradient vs finite differences") {
    Rng rng(409);
    auto s = cloud_tensor(random_cloud(12, rng));
    auto t = cloud_tensor(random_cloud(9, rng));
    auto report = grad_check<double>(
        [&]() { return chamfer_loss(s, t); }, {{"s", s}}, 1e-5, 1e-5);
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("chamfer_loss is symmetric in its arguments") {
    Rng rng(419);
    auto s = cloud_tensor(random_cloud(10, rng));
    auto t = cloud_tensor(random_cloud(14, rng));
    CHECK(chamfer_loss(s, t).item() == doctest::Approx(chamfer_loss(t, s).item()).epsilon(1e-14));
}

TEST_CASE("chamfer_loss rejects empty-shaped tensors") {
    Tensor<double> s(Shape{2, 3});
    Tensor<double> bad(Shape{2, 2});
    CHECK_THROWS_AS(chamfer_loss(s, bad), ShapeError);
}

TEST_CASE("evaluation chamfer distance") {
    Rng rng(421);
    auto a = random_cloud(20, rng);
    CHECK(chamfer_distance(a, a) == 0.0);

    PointCloud p1({{0, 0, 0}});
    PointCloud p2({{1, 0, 0}});
    CHECK(chamfer_distance(p1, p2) == doctest::Approx(1.0).epsilon(1e-15));

    for (int rep = 0; rep < 5; ++rep) {
        auto s = random_cloud(15 + rep, rng);
        auto t = random_cloud(11 + rep, rng);
        CHECK(std::abs(chamfer_distance(s, t) - serial::chamfer_distance(s, t)) < 1e-12);
    }
}

TEST_CASE("hausdorff distance") {
    Rng rng(431);
    auto a = random_cloud(20, rng);
    CHECK(hausdorff_distance(a, a) == 0.0);

    PointCloud s({{0, 0, 0}});
    PointCloud t({{1, 0, 0}, {2, 0, 0}});
    CHECK(hausdorff_distance(s, t) == doctest::Approx(2.0).epsilon(1e-15));

    for (int rep = 0; rep < 10; ++rep) {
        auto x = random_cloud(18, rng);
        auto y = random_cloud(13, rng);
        CHECK(hausdorff_distance(x, y) >= chamfer_distance(x, y));
    }
}

TEST_CASE("metrics are symmetric and rigid-motion invariant") {
    Rng rng(433);
    auto a = random_cloud(25, rng);
    auto b = random_cloud(30, rng);
    CHECK(chamfer_distance(a, b) == doctest::Approx(chamfer_distance(b, a)).epsilon(1e-14));
    CHECK(hausdorff_distance(a, b) == doctest::Approx(hausdorff_distance(b, a)).epsilon(1e-14));

    const Vec3 t{0.3, -1.2, 0.7};
    auto ra = rigid(a, 0.8, t);
    auto rb = rigid(b, 0.8, t);
    CHECK(std::abs(chamfer_distance(ra, rb) - chamfer_distance(a, b)) < 1e-6);
    CHECK(std::abs(hausdorff_distance(ra, rb) - hausdorff_distance(a, b)) < 1e-6);
}

TEST_CASE("p2f against analytic surfaces") {
    auto sphere = SurfaceRef::sphere(0.75);
    Rng rng(439);
    PointCloud on;
    on.pts.resize(200);
    for (auto& p : on.pts) p = sphere.sample(rng);
    CHECK(p2f_distance(on, sphere) < 1e-7);

    PointCloud far({{1.5, 0, 0}});
    CHECK(p2f_distance(far, sphere) == doctest::Approx(0.75).epsilon(1e-12));

    auto torus = SurfaceRef::torus(1.0, 0.4);
    PointCloud on_torus;
    on_torus.pts.resize(200);
    for (auto& p : on_torus.pts) p = torus.sample(rng);
    CHECK(p2f_distance(on_torus, torus) < 1e-7);

    auto cyl = SurfaceRef::cylinder(1.0, 2.0);
    PointCloud on_cyl;
    on_cyl.pts.resize(200);
    for (auto& p : on_cyl.pts) p = cyl.sample(rng);
    CHECK(p2f_distance(on_cyl, cyl) < 1e-7);

    auto bump = SurfaceRef::bump();
    PointCloud on_bump;
    on_bump.pts.resize(100);
    for (auto& p : on_bump.pts) p = bump.sample(rng);
    CHECK(p2f_distance(on_bump, bump) < 1e-5);
}

TEST_CASE("p2f mesh path agrees with dense sampling proxy") {
    // Unit tetrahedron mesh.
    auto mesh = std::make_shared<TriMesh>();
    mesh->vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    mesh->faces = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    auto surf = SurfaceRef::from_mesh(mesh);

    Rng rng(443);
    PointCloud probes = random_cloud(30, rng);
    PointCloud dense;
    dense.pts.resize(100000);
    for (auto& p : dense.pts) p = surf.sample(rng);

    for (const auto& p : probes.pts) {
        const double exact = surf.distance(p);
        double proxy = 1e300;
        for (const auto& q : dense.pts) proxy = std::min(proxy, std::sqrt(dist_sq(p, q)));
        CHECK(exact <= proxy + 1e-12);
        CHECK(proxy - exact < 2e-2);  // sampling resolution bound
    }
}

TEST_CASE("metric report formatting") {
    MetricReport r;
    r.cd = 0.5;
    r.hd = 1.25;
    r.p2f = 0.03125;
    r.n_pred = 8192;
    r.n_gt = 8192;
    CHECK(r.line() == "cd_e-3=0.5 hd_e-3=1.25 p2f_e-3=0.03125 n_pred=8192 n_gt=8192");
    CHECK(r.block() == "cd_e-3=0.5\nhd_e-3=1.25\np2f_e-3=0.03125\nn_pred=8192\nn_gt=8192\n");
}

TEST_CASE("empty point sets are hard errors") {
    PointCloud empty;
    PointCloud one({{0, 0, 0}});
    CHECK_THROWS_AS(chamfer_distance(empty, one), ArgumentError);
    CHECK_THROWS_AS(hausdorff_distance(one, empty), ArgumentError);
    CHECK_THROWS_AS(p2f_distance(empty, SurfaceRef::sphere()), ArgumentError);
}
