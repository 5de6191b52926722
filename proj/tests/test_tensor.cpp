#include <doctest.h>

#include <cmath>

#include "dhvae/errors.hpp"
#include "dhvae/rng.hpp"
#include "dhvae/tensor.hpp"

using namespace dhvae;

TEST_CASE("broadcast add: bias over NCHW") {
    Tensor x({2, 3, 2, 2});
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i);
    Tensor b({1, 3, 1, 1}, {10.0, 20.0, 30.0});
    Tensor y = add(x, b);
    REQUIRE(y.shape() == Shape{2, 3, 2, 2});
    CHECK(y.at(0, 0, 0, 0) == 10.0);
    CHECK(y.at(0, 1, 0, 0) == 24.0);
    CHECK(y.at(1, 2, 1, 1) == 53.0);
}

TEST_CASE("broadcast across leading dim") {
    Tensor eps({3}, {1.0, 2.0, 3.0});
    Tensor z({2, 3}, {1, 1, 1, 2, 2, 2});
    Tensor y = mul(z, eps);
    CHECK(y.at(0, 2) == 3.0);
    CHECK(y.at(1, 0) == 2.0);
}

TEST_CASE("reduce_sum_to inverts broadcasting") {
    Rng rng(3);
    Tensor a = rng.normal_tensor({2, 3, 4});
    SUBCASE("to scalar") {
        Tensor s = reduce_sum_to(a, {1});
        CHECK(s[0] == doctest::Approx(sum(a)).epsilon(1e-12));
    }
    SUBCASE("to per-channel") {
        Tensor s = reduce_sum_to(a, {1, 3, 1});
        double want = 0;
        for (std::int64_t i = 0; i < 2; ++i)
            for (std::int64_t k = 0; k < 4; ++k) want += a.at(i, 1, k);
        CHECK(s.at(0, 1, 0) == doctest::Approx(want).epsilon(1e-12));
    }
    SUBCASE("drop leading dim") {
        Tensor s = reduce_sum_to(a, {3, 4});
        CHECK(s.at(2, 1) == doctest::Approx(a.at(0, 2, 1) + a.at(1, 2, 1)).epsilon(1e-12));
    }
}

TEST_CASE("im2col/col2im adjoint identity") {
    // <im2col(x), c> == <x, col2im(c)> for random x, c
    Rng rng(11);
    const Conv2dSpec sp{3, 3, 2, 1};
    Tensor x = rng.normal_tensor({2, 3, 8, 6});
    Tensor cx = im2col(x, sp);
    Tensor c = rng.normal_tensor(cx.shape());
    Tensor xc = col2im(c, sp, x.shape());
    double lhs = 0, rhs = 0;
    for (std::int64_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * c[i];
    for (std::int64_t i = 0; i < x.numel(); ++i) rhs += x[i] * xc[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("conv2d matches direct summation") {
    Rng rng(5);
    const Conv2dSpec sp{3, 3, 1, 1};
    Tensor x = rng.normal_tensor({2, 2, 5, 4});
    Tensor w = rng.normal_tensor({3, 2, 3, 3});
    Tensor y = conv2d(x, w, sp);
    REQUIRE(y.shape() == Shape{2, 3, 5, 4});
    // check one output element by brute force
    const std::int64_t n = 1, co = 2, oh = 2, ow = 1;
    double want = 0;
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t ki = 0; ki < 3; ++ki)
            for (std::int64_t kj = 0; kj < 3; ++kj) {
                const std::int64_t ih = oh - 1 + ki, iw = ow - 1 + kj;
                if (ih < 0 || ih >= 5 || iw < 0 || iw >= 4) continue;
                want += x.at(n, c, ih, iw) * w.at(co, c, ki, kj);
            }
    CHECK(y.at(n, co, oh, ow) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("conv2d stride 2 output shape") {
    const Conv2dSpec sp{3, 3, 2, 1};
    Tensor x({1, 1, 64, 64});
    Tensor w({4, 1, 3, 3});
    CHECK(conv2d(x, w, sp).shape() == Shape{1, 4, 32, 32});
}

TEST_CASE("concat/slice/pad channel ops") {
    Tensor a = Tensor::full({1, 2, 2, 2}, 1.0);
    Tensor b = Tensor::full({1, 1, 2, 2}, 2.0);
    Tensor c = concat_ch(a, b);
    REQUIRE(c.shape() == Shape{1, 3, 2, 2});
    CHECK(c.at(0, 2, 1, 1) == 2.0);
    Tensor s = slice_ch(c, 2, 3);
    CHECK(s.shape() == Shape{1, 1, 2, 2});
    CHECK(s.at(0, 0, 0, 0) == 2.0);
    Tensor p = pad_ch(b, 1, 2);
    REQUIRE(p.shape() == Shape{1, 4, 2, 2});
    CHECK(p.at(0, 0, 0, 0) == 0.0);
    CHECK(p.at(0, 1, 0, 0) == 2.0);
    CHECK(p.at(0, 3, 1, 1) == 0.0);
}

TEST_CASE("shape errors") {
    Tensor a({2, 3});
    Tensor b({4, 5});
    CHECK_THROWS_AS((void)add(a, b), ShapeError);
    CHECK_THROWS_AS((void)matmul(a, b), ShapeError);
    CHECK_THROWS_AS(a.reshaped({7}), ShapeError);
}

TEST_CASE("rng determinism and normal moments") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(1234);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("rng state round-trip") {
    Rng a(99);
    for (int i = 0; i < 7; ++i) (void)a.normal();  // leaves a spare cached
    Rng b = Rng::from_state_str(a.state_str());
    for (int i = 0; i < 20; ++i) CHECK(a.normal() == b.normal());
}
