#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "putf/gradcheck.hpp"
#include "putf/ops.hpp"
#include "putf/rng.hpp"
#include "putf/tensor.hpp"

using namespace putf;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (double& v : t.values_mut()) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("linear identity and zero-weight cases") {
    Tensor<double> x(Shape{1, 2}, {1, 2});
    Tensor<double> eye(Shape{2, 2}, {1, 0, 0, 1});
    Tensor<double> zero_b(Shape{2});
    auto y = ops::linear(x, eye, zero_b);
    CHECK(y.at(0, 0) == 1.0);
    CHECK(y.at(0, 1) == 2.0);

    Tensor<double> zeros(Shape{2, 2});
    Tensor<double> b(Shape{2}, {3, 4});
    auto z = ops::linear(x, zeros, b);
    CHECK(z.at(0, 0) == 3.0);
    CHECK(z.at(0, 1) == 4.0);
}

TEST_CASE("linear matches triple-loop multiply") {
    Rng rng(11);
    auto x = random_tensor({4, 3}, rng);
    auto w = random_tensor({3, 2}, rng);
    auto b = random_tensor({2}, rng);
    auto y = ops::linear(x, w, b);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double acc = b.at(j);
            for (std::size_t k = 0; k < 3; ++k) acc += x.at(i, k) * w.at(k, j);
            CHECK(std::abs(y.at(i, j) - acc) < 1e-12);
        }
}

TEST_CASE("linear shape errors carry both shapes") {
    Tensor<double> x(Shape{2, 3});
    Tensor<double> w(Shape{4, 2});
    Tensor<double> b(Shape{2});
    CHECK_THROWS_WITH_AS(ops::linear(x, w, b),
                         doctest::Contains("[2, 3]"), ShapeError);
    try {
        ops::linear(x, w, b);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("[4, 2]") != std::string::npos);
    }
}

TEST_CASE("matmul identity and hand product") {
    Tensor<double> eye(Shape{2, 2}, {1, 0, 0, 1});
    Tensor<double> b(Shape{2, 2}, {5, 6, 7, 8});
    auto y = ops::matmul(eye, b);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i / 2, i % 2) == b.at(i / 2, i % 2));

    Tensor<double> a1(Shape{1, 2}, {1, 2});
    Tensor<double> b1(Shape{2, 1}, {3, 4});
    CHECK(ops::matmul(a1, b1).item() == doctest::Approx(11.0).epsilon(1e-15));

    Tensor<double> bad(Shape{3, 2});
    CHECK_THROWS_AS(ops::matmul(a1, bad), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(7);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({4, 2}, rng);
    auto report = grad_check<double>(
        [&]() { return ops::sum(ops::matmul(a, b)); },
        {{"a", a}, {"b", b}}, 1e-5, 1e-9);
    CHECK(report.max_rel_err < 1e-9);
}

TEST_CASE("batched matmul matches per-slice product") {
    Rng rng(13);
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({2, 4, 5}, rng);
    auto y = ops::matmul(a, b);
    REQUIRE(y.shape() == Shape{2, 3, 5});
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                double acc = 0;
                for (std::size_t k = 0; k < 4; ++k) acc += a.at(t, i, k) * b.at(t, k, j);
                CHECK(std::abs(y.at(t, i, j) - acc) < 1e-12);
            }
}

TEST_CASE("softmax uniform, oracle, and shift invariance") {
    Tensor<double> flat(Shape{1, 4});
    auto u = ops::softmax_lastdim(flat);
    for (std::size_t j = 0; j < 4; ++j) CHECK(u.at(0, j) == doctest::Approx(0.25).epsilon(1e-15));

    Tensor<double> x(Shape{1, 3}, {1, 2, 3});
    auto y = ops::softmax_lastdim(x);
    const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(std::abs(y.at(0, j) - std::exp(1.0 + double(j)) / denom) < 1e-12);

    // Dyadic logits and a power-of-two shift keep the max-subtracted inputs
    // bit-identical, so the outputs match bit for bit.
    Rng rng(3);
    std::vector<double> vals(8);
    for (double& v : vals) v = std::floor(rng.uniform(0, 1024)) / 1024.0;
    Tensor<double> base(Shape{2, 4}, vals);
    for (double& v : vals) v += 2.0;
    Tensor<double> shifted(Shape{2, 4}, vals);
    auto yb = ops::softmax_lastdim(base);
    auto ys = ops::softmax_lastdim(shifted);
    for (std::size_t i = 0; i < 8; ++i) CHECK(yb.values()[i] == ys.values()[i]);
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(17);
    auto x = random_tensor({16, 9}, rng, -4, 4);
    auto y = ops::softmax_lastdim(x);
    for (std::size_t i = 0; i < 16; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 9; ++j) s += y.at(i, j);
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("elementwise and broadcast ops") {
    Rng rng(19);
    auto x = random_tensor({3, 4}, rng);
    auto bias = random_tensor({4}, rng);
    auto y = ops::add(x, bias);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(y.at(i, j) == x.at(i, j) + bias.at(j));

    auto r = ops::relu(x);
    for (std::size_t i = 0; i < 12; ++i) CHECK(r.values()[i] == std::max(0.0, x.values()[i]));

    auto report = grad_check<double>(
        [&]() { return ops::sum(ops::relu(ops::add(x, bias))); },
        {{"x", x}, {"bias", bias}}, 1e-5, 1e-7);
    CHECK(report.max_rel_err < 1e-7);
}

TEST_CASE("concat/slice partition round-trip is bit-exact") {
    Rng rng(23);
    auto x = random_tensor({5, 7}, rng);
    auto left = ops::slice_lastdim(x, 0, 3);
    auto right = ops::slice_lastdim(x, 3, 4);
    auto back = ops::concat_lastdim<double>({left, right});
    REQUIRE(back.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.values()[i] == x.values()[i]);

    CHECK_THROWS_AS(ops::slice_lastdim(x, 5, 4), IndexError);
}

TEST_CASE("gather then max with k=1 self-indices is the identity") {
    Rng rng(29);
    auto x = random_tensor({6, 3}, rng);
    std::vector<std::uint32_t> self_idx{0, 1, 2, 3, 4, 5};
    auto gathered = ops::gather_rows(x, self_idx, 1);
    auto back = ops::max_over_axis(gathered, 1);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.values()[i] == x.values()[i]);

    std::vector<std::uint32_t> bad{0, 1, 2, 3, 4, 9};
    CHECK_THROWS_AS(ops::gather_rows(x, bad, 1), IndexError);
}

TEST_CASE("max gradient routes to the argmax only, first index on ties") {
    Tensor<double> x(Shape{1, 3, 2}, {1, 5, 4, 5, 4, 2});
    Tape<double> tape;
    TapeScope<double> scope(tape);
    x.set_requires_grad(true);
    auto loss = ops::sum(ops::max_over_axis(x, 1));
    tape.backward(loss);
    // channel 0: max is 4 at j=1; channel 1: tie of 5 at j=0 and j=1 -> j=0
    std::vector<double> expected{0, 1, 1, 0, 0, 0};
    for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == expected[i]);
}

TEST_CASE("gather scatter conserves gradient mass") {
    Rng rng(31);
    auto x = random_tensor({5, 4}, rng);
    std::vector<std::uint32_t> idx;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) idx.push_back(static_cast<std::uint32_t>(rng.below(5)));

    Tape<double> tape;
    TapeScope<double> scope(tape);
    x.set_requires_grad(true);
    auto g = ops::gather_rows(x, idx, 3);
    auto loss = ops::sum(g);
    tape.backward(loss);
    double total = 0;
    for (double v : x.grad()) total += v;
    CHECK(total == doctest::Approx(static_cast<double>(g.numel())).epsilon(1e-12));

    auto fd = grad_check<double>(
        [&]() { return ops::sum(ops::gather_rows(x, idx, 3)); }, {{"x", x}}, 1e-5, 1e-9);
    CHECK(fd.max_rel_err < 1e-9);
}

TEST_CASE("max_over_axis gradient vs finite differences") {
    Rng rng(37);
    auto x = random_tensor({4, 3, 5}, rng);
    auto report = grad_check<double>(
        [&]() { return ops::sum(ops::max_over_axis(x, 1)); }, {{"x", x}}, 1e-5, 1e-7);
    CHECK(report.max_rel_err < 1e-7);
}

TEST_CASE("layer_norm basics") {
    Tensor<double> gamma = Tensor<double>::full(Shape{4}, 1.0);
    Tensor<double> beta(Shape{4});
    Tensor<double> constant(Shape{2, 4}, {3, 3, 3, 3, -1, -1, -1, -1});
    auto y = ops::layer_norm(constant, gamma, beta, 1e-6);
    for (double v : y.values()) CHECK(std::abs(v) < 1e-9);

    Rng rng(41);
    auto x = random_tensor({6, 8}, rng);
    Tensor<double> g2 = Tensor<double>::full(Shape{8}, 1.7);
    Tensor<double> b2 = Tensor<double>::full(Shape{8}, 0.3);
    auto z = ops::layer_norm(x, g2, b2, 1e-8);
    for (std::size_t i = 0; i < 6; ++i) {
        double mean = 0, var = 0;
        for (std::size_t j = 0; j < 8; ++j) mean += z.at(i, j);
        mean /= 8;
        for (std::size_t j = 0; j < 8; ++j) var += (z.at(i, j) - mean) * (z.at(i, j) - mean);
        var /= 8;
        CHECK(mean == doctest::Approx(0.3).epsilon(1e-6));
        CHECK(std::sqrt(var) == doctest::Approx(1.7).epsilon(1e-4));
    }
}

TEST_CASE("layer_norm gradient vs finite differences") {
    Rng rng(43);
    auto x = random_tensor({5, 6}, rng);
    auto gamma = random_tensor({6}, rng, 0.5, 1.5);
    auto beta = random_tensor({6}, rng);
    auto report = grad_check<double>(
        [&]() { return ops::mean(ops::layer_norm(x, gamma, beta, 1e-6)); },
        {{"x", x}, {"gamma", gamma}, {"beta", beta}}, 1e-5, 1e-6);
    CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("batch_norm eval identity and train statistics") {
    Tensor<double> gamma = Tensor<double>::full(Shape{3}, 1.0);
    Tensor<double> beta(Shape{3});
    Tensor<double> rm(Shape{3});
    Tensor<double> rv = Tensor<double>::full(Shape{3}, 1.0);

    Rng rng(47);
    auto x = random_tensor({7, 3}, rng);
    auto y = ops::batch_norm(x, gamma, beta, rm, rv, 0.9, 0.0, /*train=*/false);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-12));

    auto t = ops::batch_norm(x, gamma, beta, rm, rv, 0.9, 1e-12, /*train=*/true);
    for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0;
        for (std::size_t i = 0; i < 7; ++i) mean += t.at(i, j);
        CHECK(std::abs(mean / 7) < 1e-6);
    }
    // running stats moved toward the batch stats
    CHECK(rm.values()[0] != 0.0);

    Tensor<double> single(Shape{1, 3});
    CHECK_THROWS_AS(ops::batch_norm(single, gamma, beta, rm, rv, 0.9, 1e-5, true), NumericError);
}

TEST_CASE("batch_norm gradient vs finite differences on 2x3x4") {
    Rng rng(53);
    auto x = random_tensor({2, 3, 4}, rng);
    auto gamma = random_tensor({4}, rng, 0.5, 1.5);
    auto beta = random_tensor({4}, rng);
    Tensor<double> rm(Shape{4});
    Tensor<double> rv = Tensor<double>::full(Shape{4}, 1.0);
    auto report = grad_check<double>(
        [&]() {
            return ops::mean(ops::batch_norm(x, gamma, beta, rm, rv, 0.9, 1e-5, true));
        },
        {{"x", x}, {"gamma", gamma}, {"beta", beta}}, 1e-5, 1e-5);
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("shuffle definitional example and round trip") {
    Tensor<double> x(Shape{2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});  // [[a..d],[e..h]]
    auto y = ops::shuffle(x, 2);
    REQUIRE(y.shape() == Shape{4, 2});
    std::vector<double> expected{1, 2, 3, 4, 5, 6, 7, 8};
    for (std::size_t i = 0; i < 8; ++i) CHECK(y.values()[i] == expected[i]);

    Rng rng(59);
    auto z = random_tensor({3, 8}, rng);
    auto round = ops::unshuffle(ops::shuffle(z, 4), 4);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(round.values()[i] == z.values()[i]);

    auto same = ops::shuffle(z, 1);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(same.values()[i] == z.values()[i]);

    CHECK_THROWS_AS(ops::shuffle(z, 3), ShapeError);
}

TEST_CASE("grad_check on closed forms") {
    Rng rng(61);
    // Dyadic values and a power-of-two step keep every f(x +/- h) sum exact,
    // so the linear case has error exactly 0.
    Tensor<double> x(Shape{3, 3});
    for (double& v : x.values_mut()) v = std::floor(rng.uniform(0, 1024)) / 1024.0;
    const double h = 0x1.0p-17;

    auto sum_report = grad_check<double>([&]() { return ops::sum(x); }, {{"x", x}}, h, 1e-12);
    CHECK(sum_report.max_rel_err == 0.0);

    auto sq_report = grad_check<double>(
        [&]() {
            auto prod = ops::matmul(ops::reshape(x, Shape{1, 9}), ops::reshape(x, Shape{9, 1}));
            return ops::sum(prod);
        },
        {{"x", x}}, 1e-5, 1e-9);
    CHECK(sq_report.max_rel_err < 1e-9);
}

TEST_CASE("composed graph gradient and determinism") {
    Rng rng(67);
    auto x = random_tensor({4, 6}, rng);
    auto w = random_tensor({6, 6}, rng);
    auto b = random_tensor({6}, rng);
    auto gamma = random_tensor({6}, rng, 0.5, 1.5);
    auto beta = random_tensor({6}, rng);

    auto f = [&]() {
        auto h = ops::relu(ops::linear(x, w, b));
        auto n = ops::layer_norm(h, gamma, beta, 1e-6);
        auto attn = ops::softmax_lastdim(ops::matmul(n, ops::transpose_last2(n)));
        return ops::mean(ops::matmul(attn, n));
    };
    auto report = grad_check<double>(
        f, {{"x", x}, {"w", w}, {"b", b}, {"gamma", gamma}, {"beta", beta}}, 1e-5, 1e-4);
    CHECK(report.max_rel_err < 1e-4);

    auto y1 = f();
    auto y2 = f();
    CHECK(y1.item() == y2.item());
}

TEST_CASE("non-finite forward values raise immediately") {
    Tensor<double> x(Shape{1, 2}, {1e308, 1e308});
    Tensor<double> w(Shape{2, 1}, {1e308, 1e308});
    Tensor<double> b(Shape{1});
    CHECK_THROWS_AS(ops::linear(x, w, b), NumericError);
}

TEST_CASE("backward accumulates across items and zero_grad resets") {
    Tensor<double> w(Shape{2, 1}, {1.0, 2.0});
    w.set_requires_grad(true);
    Tensor<double> x(Shape{1, 2}, {1.0, 1.0});
    Tensor<double> b(Shape{1});
    for (int rep = 0; rep < 2; ++rep) {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        tape.backward(ops::sum(ops::linear(x, w, b)));
    }
    CHECK(w.grad()[0] == 2.0);
    CHECK(w.grad()[1] == 2.0);
    w.zero_grad();
    CHECK(w.grad()[0] == 0.0);
}
