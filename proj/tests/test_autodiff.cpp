#include <doctest.h>

#include <cmath>
#include <functional>

#include "dhvae/graph.hpp"
#include "dhvae/rng.hpp"

using namespace dhvae;

namespace {

// central finite differences of f at x, coordinate-wise
Tensor fd_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-6) {
    Tensor g(x.shape());
    Tensor xp = x;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double v = x[i];
        xp[i] = v + h;
        const double fp = f(xp);
        xp[i] = v - h;
        const double fm = f(xp);
        xp[i] = v;
        g[i] = (fp - fm) / (2 * h);
    }
    return g;
}

double max_rel_err(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = std::abs(a[i] - b[i]);
        m = std::max(m, d / (std::abs(a[i]) + std::abs(b[i]) + 1e-8));
    }
    return m;
}

}  // namespace

TEST_CASE("grad of simple scalar expressions") {
    Graph g;
    Var x = g.leaf(Tensor::scalar(2.0), true);
    Var y = g.leaf(Tensor::scalar(3.0), true);
    // f = x^2 * y + exp(x)
    Var f = add(mul(mul(x, x), y), vexp(x));
    auto grads = g.gradients(f, {x, y});
    CHECK(g.value(grads[0])[0] == doctest::Approx(2 * 2 * 3 + std::exp(2.0)).epsilon(1e-12));
    CHECK(g.value(grads[1])[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("grad with broadcasting reduces correctly") {
    Graph g;
    Tensor bval({1, 3, 1, 1}, {0.1, 0.2, 0.3});
    Rng rng(2);
    Var x = g.leaf(rng.normal_tensor({2, 3, 4, 4}), true);
    Var b = g.leaf(bval, true);
    Var f = sum_all(mul(add(x, b), add(x, b)));
    auto grads = g.gradients(f, {x, b});
    // d/db sum (x+b)^2 = sum over broadcast dims of 2(x+b)
    Tensor want = reduce_sum_to(mul_scalar(add(g.value(x), bval), 2.0), {1, 3, 1, 1});
    CHECK(max_rel_err(g.value(grads[1]), want) < 1e-12);
}

TEST_CASE("matmul gradients match finite differences") {
    Rng rng(5);
    Tensor a0 = rng.normal_tensor({3, 4});
    Tensor b0 = rng.normal_tensor({4, 2});
    for (bool ta : {false, true})
        for (bool tb : {false, true}) {
            Tensor at = ta ? permute3(a0.reshaped({1, 3, 4}), 0, 2, 1).reshaped({4, 3}) : a0;
            Tensor bt = tb ? permute3(b0.reshaped({1, 4, 2}), 0, 2, 1).reshaped({2, 4}) : b0;
            auto f = [&](const Tensor& av) {
                return sum(mul(matmul(av, bt, ta, tb), matmul(av, bt, ta, tb)));
            };
            Graph g;
            Var av = g.leaf(at, true);
            Var bv = g.leaf(bt, true);
            Var y = matmul(av, bv, ta, tb);
            Var loss = sum_all(mul(y, y));
            auto grads = g.gradients(loss, {av, bv});
            CHECK(max_rel_err(g.value(grads[0]), fd_grad(f, at)) < 1e-6);
        }
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(7);
    const Conv2dSpec sp{3, 3, 2, 1};
    Tensor x0 = rng.normal_tensor({2, 2, 6, 6});
    Tensor w0 = rng.normal_tensor({3, 2, 3, 3});
    Graph g;
    Var x = g.leaf(x0, true);
    Var w = g.leaf(w0, true);
    Var y = conv2d(x, w, sp);
    Var loss = sum_all(mul(y, y));
    auto grads = g.gradients(loss, {x, w});
    auto fx = [&](const Tensor& xv) {
        Tensor y2 = conv2d(xv, w0, sp);
        return sum(mul(y2, y2));
    };
    auto fw = [&](const Tensor& wv) {
        Tensor y2 = conv2d(x0, wv, sp);
        return sum(mul(y2, y2));
    };
    CHECK(max_rel_err(g.value(grads[0]), fd_grad(fx, x0)) < 1e-6);
    CHECK(max_rel_err(g.value(grads[1]), fd_grad(fw, w0)) < 1e-6);
}

TEST_CASE("upsample_nearest2 is exact nearest neighbour and differentiable") {
    Graph g;
    Tensor x0({1, 1, 2, 2}, {1, 2, 3, 4});
    Var x = g.leaf(x0, true);
    Var y = upsample_nearest2(x);
    REQUIRE(g.shape(y) == Shape{1, 1, 4, 4});
    CHECK(g.value(y).at(0, 0, 0, 1) == 1.0);
    CHECK(g.value(y).at(0, 0, 1, 0) == 1.0);
    CHECK(g.value(y).at(0, 0, 2, 3) == 4.0);
    Var loss = sum_all(y);
    auto grads = g.gradients(loss, {x});
    CHECK(g.value(grads[0]).at(0, 0, 0, 0) == 4.0);  // each input feeds 4 outputs
}

TEST_CASE("maxpool2 grad routes to argmax") {
    Graph g;
    Tensor x0({1, 1, 2, 2}, {1, 5, 3, 2});
    Var x = g.leaf(x0, true);
    Var y = maxpool2(x);
    CHECK(g.value(y)[0] == 5.0);
    auto grads = g.gradients(sum_all(y), {x});
    CHECK(g.value(grads[0])[0] == 0.0);
    CHECK(g.value(grads[0])[1] == 1.0);
}

TEST_CASE("second-order gradients (grad of grad)") {
    // f(x) = x^3 -> f' = 3x^2, f'' = 6x
    Graph g;
    Var x = g.leaf(Tensor::scalar(1.7), true);
    Var f = mul(mul(x, x), x);
    Var fp = g.gradients(f, {x})[0];
    Var fpp = g.gradients(fp, {x})[0];
    CHECK(g.value(fp)[0] == doctest::Approx(3 * 1.7 * 1.7).epsilon(1e-12));
    CHECK(g.value(fpp)[0] == doctest::Approx(6 * 1.7).epsilon(1e-12));
}

TEST_CASE("second-order through a gradient-containing expression") {
    // U(z) = sum(z^4)/4; flow uses gradU inside: y = sum((z - 0.1*gradU)^2)
    // d y / d z must match finite differences (requires double backward).
    Rng rng(9);
    Tensor z0 = rng.normal_tensor({4});
    auto eval = [&](const Tensor& zt) {
        Graph g;
        Var z = g.leaf(zt, true);
        Var u = mul(sum_all(mul(mul(z, z), mul(z, z))), g.constant(0.25));
        Var gu = g.gradients(u, {z})[0];
        Var y = sub(z, mul(g.constant(0.1), gu));
        return std::pair<double, Tensor>{g.value(sum_all(mul(y, y)))[0], Tensor()};
    };
    auto f = [&](const Tensor& zt) { return eval(zt).first; };

    Graph g;
    Var z = g.leaf(z0, true);
    Var u = mul(sum_all(mul(mul(z, z), mul(z, z))), g.constant(0.25));
    Var gu = g.gradients(u, {z})[0];
    Var y = sub(z, mul(g.constant(0.1), gu));
    Var loss = sum_all(mul(y, y));
    Var grad = g.gradients(loss, {z})[0];
    CHECK(max_rel_err(g.value(grad), fd_grad(f, z0)) < 1e-6);
}

TEST_CASE("gradient of unused variable is zero leaf") {
    Graph g;
    Var x = g.leaf(Tensor::scalar(1.0), true);
    Var y = g.leaf(Tensor::scalar(2.0), true);
    Var f = mul(x, x);
    auto grads = g.gradients(f, {x, y});
    CHECK(g.value(grads[1])[0] == 0.0);
}

TEST_CASE("sigmoid/swish/clamp/lrelu grads vs finite differences") {
    Rng rng(12);
    Tensor x0 = rng.normal_tensor({16});
    {
        Graph g;
        Var x = g.leaf(x0, true);
        Var loss = sum_all(swish(x));
        auto gr = g.gradients(loss, {x});
        auto f = [&](const Tensor& xv) { return sum(mul(xv, sigmoid(xv))); };
        CHECK(max_rel_err(g.value(gr[0]), fd_grad(f, x0)) < 1e-6);
    }
    {
        Graph g;
        Var x = g.leaf(x0, true);
        Var loss = sum_all(mul(clamp(x, -0.5, 0.5), clamp(x, -0.5, 0.5)));
        auto gr = g.gradients(loss, {x});
        auto f = [&](const Tensor& xv) { return sum(mul(clamp(xv, -0.5, 0.5), clamp(xv, -0.5, 0.5))); };
        CHECK(max_rel_err(g.value(gr[0]), fd_grad(f, x0)) < 1e-5);
    }
    {
        Graph g;
        Var x = g.leaf(x0, true);
        auto gr = g.gradients(sum_all(leaky_relu(x, 0.2)), {x});
        for (std::int64_t i = 0; i < x0.numel(); ++i)
            CHECK(g.value(gr[0])[i] == (x0[i] > 0 ? 1.0 : 0.2));
    }
}
