// Parallel kernels against their serial references. The gemm pair uses the
// same per-element accumulation order, so agreement is bit-exact; softmax
// differs by one rounding (reciprocal vs divide) and is compared to 4 ulps.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "putf/geometry.hpp"
#include "putf/kernels.hpp"
#include "putf/metrics.hpp"
#include "putf/rng.hpp"

using namespace putf;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1, double hi = 1) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

PointCloud random_cloud(std::size_t n, Rng& rng) {
    PointCloud c;
    c.pts.resize(n);
    for (auto& p : c.pts)
        p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    return c;
}

}  // namespace

TEST_CASE("gemm parallel matches serial bit-exactly") {
    Rng rng(101);
    for (auto [n, m, p] : {std::array<std::size_t, 3>{7, 5, 9},
                           std::array<std::size_t, 3>{64, 48, 32},
                           std::array<std::size_t, 3>{33, 17, 129}}) {
        auto a = random_values(n * m, rng);
        auto b = random_values(m * p, rng);
        std::vector<double> c1(n * p), c2(n * p);
        kern::gemm(a.data(), b.data(), c1.data(), n, m, p);
        kern::serial::gemm(a.data(), b.data(), c2.data(), n, m, p);
        for (std::size_t i = 0; i < n * p; ++i) CHECK(c1[i] == c2[i]);
    }
}

TEST_CASE("gemm transpose helpers match composed references") {
    Rng rng(103);
    const std::size_t n = 13, m = 9, p = 11;

    auto a = random_values(n * m, rng);
    auto b = random_values(p * m, rng);
    std::vector<double> via_helper(n * p);
    kern::gemm_abt(a.data(), b.data(), via_helper.data(), n, m, p);
    std::vector<double> bt(m * p), direct(n * p);
    kern::transpose(b.data(), p, m, bt.data());
    kern::serial::gemm(a.data(), bt.data(), direct.data(), n, m, p);
    for (std::size_t i = 0; i < n * p; ++i) CHECK(via_helper[i] == direct[i]);

    auto a2 = random_values(m * n, rng);
    auto b2 = random_values(m * p, rng);
    std::vector<double> via_atb(n * p);
    kern::gemm_atb(a2.data(), b2.data(), via_atb.data(), n, m, p);
    std::vector<double> a2t(n * m), direct2(n * p);
    kern::transpose(a2.data(), m, n, a2t.data());
    kern::serial::gemm(a2t.data(), b2.data(), direct2.data(), n, m, p);
    for (std::size_t i = 0; i < n * p; ++i) CHECK(via_atb[i] == direct2[i]);
}

TEST_CASE("softmax rows parallel vs serial") {
    Rng rng(107);
    const std::size_t rows = 37, cols = 21;
    auto x = random_values(rows * cols, rng, -5, 5);
    std::vector<double> y1(x.size()), y2(x.size());
    kern::softmax_rows(x.data(), y1.data(), rows, cols);
    kern::serial::softmax_rows(x.data(), y2.data(), rows, cols);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::abs(y1[i] - y2[i]) <= 4 * std::numeric_limits<double>::epsilon() * y2[i]);
}

TEST_CASE("deterministic sum equals serial sum across chunk boundary sizes") {
    Rng rng(109);
    for (std::size_t n : {1ul, 4095ul, 4096ul, 4097ul, 20000ul}) {
        auto x = random_values(n, rng);
        const double got = kern::sum_deterministic(x.data(), n);
        // reference: same chunking evaluated serially
        double ref = 0;
        std::vector<double> partial;
        for (std::size_t i = 0; i < n; i += 4096) {
            double s = 0;
            for (std::size_t j = i; j < std::min(n, i + 4096); ++j) s += x[j];
            partial.push_back(s);
        }
        for (double s : partial) ref += s;
        CHECK(got == ref);
    }
}

TEST_CASE("knn parallel matches full-sort serial reference exactly") {
    Rng rng(113);
    auto cloud = random_cloud(64, rng);
    auto a = knn(cloud, 9);
    auto b = serial::knn(cloud, 9);
    REQUIRE(a.idx.size() == b.idx.size());
    for (std::size_t i = 0; i < a.idx.size(); ++i) CHECK(a.idx[i] == b.idx[i]);
}

TEST_CASE("fps parallel matches serial reference exactly") {
    Rng rng(127);
    auto cloud = random_cloud(500, rng);
    auto a = fps(cloud, 61);
    auto b = serial::fps(cloud, 61);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("metric kernels match nested-loop references") {
    Rng rng(131);
    for (int rep = 0; rep < 5; ++rep) {
        auto a = random_cloud(40 + 3 * rep, rng);
        auto b = random_cloud(25 + 2 * rep, rng);
        CHECK(std::abs(chamfer_distance(a, b) - serial::chamfer_distance(a, b)) < 1e-12);
        CHECK(std::abs(hausdorff_distance(a, b) - serial::hausdorff_distance(a, b)) < 1e-12);
    }
}
