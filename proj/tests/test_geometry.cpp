#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "putf/geometry.hpp"
#include "putf/rng.hpp"

using namespace putf;

namespace {

PointCloud random_cloud(std::size_t n, Rng& rng, double scale = 1.0) {
    PointCloud c;
    c.pts.resize(n);
    for (auto& p : c.pts)
        p = {scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1)};
    return c;
}

PointCloud sphere_cloud(std::size_t n, Rng& rng) {
    PointCloud c;
    c.pts.resize(n);
    for (auto& p : c.pts) {
        Vec3 g{rng.normal(), rng.normal(), rng.normal()};
        p = g * (1.0 / norm(g));
    }
    return c;
}

double min_pairwise_dist(const PointCloud& c, const std::vector<std::uint32_t>& idx) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = i + 1; j < idx.size(); ++j)
            best = std::min(best, std::sqrt(dist_sq(c[idx[i]], c[idx[j]])));
    return best;
}

}  // namespace

TEST_CASE("knn on collinear points") {
    PointCloud c({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
    auto nbr = knn(c, 2);
    CHECK(nbr.at(1, 0) == 1);  // self first
    CHECK(nbr.at(1, 1) == 0);  // x=0 closer than x=3
}

TEST_CASE("knn with k=1 returns self rows") {
    Rng rng(211);
    auto c = random_cloud(20, rng);
    auto nbr = knn(c, 1);
    for (std::size_t i = 0; i < 20; ++i) CHECK(nbr.at(i, 0) == i);
}

TEST_CASE("knn row distances are non-decreasing and start at self") {
    Rng rng(223);
    auto c = random_cloud(50, rng);
    auto nbr = knn(c, 7);
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(nbr.at(i, 0) == i);
        double prev = 0;
        for (std::size_t j = 0; j < 7; ++j) {
            const double d = std::sqrt(dist_sq(c[i], c[nbr.at(i, j)]));
            CHECK(d >= prev);
            prev = d;
        }
    }
}

TEST_CASE("knn rejects k > N") {
    Rng rng(227);
    auto c = random_cloud(5, rng);
    CHECK_THROWS_AS(knn(c, 6), ArgumentError);
}

TEST_CASE("knn is permutation-consistent") {
    Rng rng(229);
    auto c = random_cloud(40, rng);
    auto base = knn(c, 6);

    std::vector<std::uint32_t> perm(40);
    for (std::size_t i = 0; i < 40; ++i) perm[i] = static_cast<std::uint32_t>(i);
    rng.shuffle(perm);
    PointCloud permuted;
    permuted.pts.resize(40);
    for (std::size_t i = 0; i < 40; ++i) permuted.pts[perm[i]] = c[i];
    auto mapped = knn(permuted, 6);
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            CHECK(mapped.at(perm[i], j) == perm[base.at(i, j)]);
}

TEST_CASE("fps with m=N is a permutation of all indices") {
    Rng rng(233);
    auto c = random_cloud(30, rng);
    auto picks = fps(c, 30);
    std::set<std::uint32_t> unique(picks.begin(), picks.end());
    CHECK(unique.size() == 30);
}

TEST_CASE("fps second pick on a unit square is the diagonal corner") {
    PointCloud corners({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
    auto picks = fps(corners, 2, 0);
    REQUIRE(picks.size() == 2);
    CHECK(picks[0] == 0);
    CHECK(picks[1] == 3);
}

TEST_CASE("fps spreads better than random subsets") {
    Rng rng(239);
    auto c = random_cloud(128, rng);
    const std::size_t m = 16;
    const double fps_spacing = min_pairwise_dist(c, fps(c, m));
    std::vector<std::uint32_t> all(128);
    for (std::size_t i = 0; i < 128; ++i) all[i] = static_cast<std::uint32_t>(i);
    for (int rep = 0; rep < 100; ++rep) {
        rng.shuffle(all);
        std::vector<std::uint32_t> subset(all.begin(), all.begin() + m);
        CHECK(fps_spacing >= min_pairwise_dist(c, subset));
    }
}

TEST_CASE("fps ignores appended duplicates, set-wise") {
    Rng rng(241);
    auto c = random_cloud(25, rng);
    auto base = fps(c, 10);

    PointCloud with_dups = c;
    with_dups.pts.push_back(c[0]);
    with_dups.pts.push_back(c[3]);
    auto again = fps(with_dups, 10);
    std::set<std::uint32_t> a(base.begin(), base.end());
    std::set<std::uint32_t> b(again.begin(), again.end());
    CHECK(a == b);
}

TEST_CASE("fps is deterministic") {
    Rng rng(251);
    auto c = random_cloud(200, rng);
    CHECK(fps(c, 50) == fps(c, 50));
    CHECK(fps(c, 50, 3) == fps(c, 50, 3));
}

TEST_CASE("extract_patches with N == patch_size yields one full patch") {
    Rng rng(257);
    auto c = random_cloud(32, rng, 2.0);
    auto set = extract_patches(c, 32);
    REQUIRE(set.patches.size() == 1);
    const auto& patch = set.patches[0];
    CHECK(patch.indices.size() == 32);
    const Vec3 mean = c.centroid();
    for (int a = 0; a < 3; ++a) CHECK(patch.centroid[a] == doctest::Approx(mean[a]).epsilon(1e-12));
}

TEST_CASE("extract_patches covers every point and stays in the unit ball") {
    Rng rng(263);
    auto c = sphere_cloud(512, rng);
    auto set = extract_patches(c, 256);
    CHECK(set.patches.size() >= 6);
    std::vector<bool> covered(c.size(), false);
    for (const auto& patch : set.patches) {
        CHECK(patch.indices.size() == 256);
        for (auto i : patch.indices) covered[i] = true;
        for (const auto& p : patch.normalized.pts) CHECK(norm(p) <= 1.0 + 1e-6);
    }
    CHECK(std::all_of(covered.begin(), covered.end(), [](bool b) { return b; }));
}

TEST_CASE("patch de-normalization restores parent coordinates") {
    Rng rng(269);
    auto c = random_cloud(100, rng, 5.0);
    auto set = extract_patches(c, 40);
    for (const auto& patch : set.patches)
        for (std::size_t j = 0; j < patch.indices.size(); ++j) {
            const Vec3 restored = patch.denormalize(patch.normalized.pts[j]);
            const Vec3 original = c[patch.indices[j]];
            for (int a = 0; a < 3; ++a) CHECK(std::abs(restored[a] - original[a]) < 1e-6);
        }
}

TEST_CASE("extract_patches rejects oversized patches") {
    Rng rng(271);
    auto c = random_cloud(10, rng);
    CHECK_THROWS_AS(extract_patches(c, 11), ArgumentError);
}

TEST_CASE("merge_upsampled keeps a single exact-size patch, set-wise") {
    Rng rng(277);
    auto patch = random_cloud(64, rng);
    auto merged = merge_upsampled({patch}, 64);
    REQUIRE(merged.size() == 64);
    std::set<std::array<double, 3>> a(patch.pts.begin(), patch.pts.end());
    std::set<std::array<double, 3>> b(merged.pts.begin(), merged.pts.end());
    CHECK(a == b);
}

TEST_CASE("merge_upsampled prefers distinct points over duplicates") {
    Rng rng(281);
    auto patch = sphere_cloud(80, rng);
    std::vector<std::uint32_t> all(80);
    for (std::size_t i = 0; i < 80; ++i) all[i] = static_cast<std::uint32_t>(i);
    const double single_spacing = min_pairwise_dist(patch, all);

    auto merged = merge_upsampled({patch, patch}, 80);
    REQUIRE(merged.size() == 80);
    std::vector<std::uint32_t> all_m(80);
    for (std::size_t i = 0; i < 80; ++i) all_m[i] = static_cast<std::uint32_t>(i);
    CHECK(min_pairwise_dist(merged, all_m) >= single_spacing * (1 - 1e-6));
}

TEST_CASE("merge_upsampled requires enough candidates") {
    Rng rng(283);
    auto patch = random_cloud(10, rng);
    CHECK_THROWS_AS(merge_upsampled({patch}, 11), ArgumentError);
}

TEST_CASE("add_noise basics") {
    Rng rng(293);
    auto c = random_cloud(100, rng);
    auto same = add_noise(c, 0.0, 42);
    for (std::size_t i = 0; i < c.size(); ++i)
        for (int a = 0; a < 3; ++a) CHECK(same[i][a] == c[i][a]);

    auto n1 = add_noise(c, 0.01, 42);
    auto n2 = add_noise(c, 0.01, 42);
    for (std::size_t i = 0; i < c.size(); ++i)
        for (int a = 0; a < 3; ++a) CHECK(n1[i][a] == n2[i][a]);

    CHECK_THROWS_AS(add_noise(c, -0.1, 42), ArgumentError);
}

TEST_CASE("add_noise displacement statistics") {
    Rng rng(307);
    auto c = random_cloud(10000, rng);
    const double beta = 0.01;
    auto noisy = add_noise(c, beta, 7);
    for (int a = 0; a < 3; ++a) {
        double var = 0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double d = noisy[i][a] - c[i][a];
            var += d * d;
        }
        const double std_dev = std::sqrt(var / static_cast<double>(c.size()));
        CHECK(std_dev == doctest::Approx(beta).epsilon(0.05));
    }
}
