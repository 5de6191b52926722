#include <doctest.h>

#include <cmath>

#include "dhvae/errors.hpp"
#include "dhvae/metrics.hpp"
#include "dhvae/rng.hpp"

using namespace dhvae;

TEST_CASE("psnr reference points") {
    Tensor a = Tensor::full({4, 4}, 0.25);
    SUBCASE("identical inputs hit the +inf sentinel") {
        CHECK(std::isinf(psnr(a, a, 1.0)));
    }
    SUBCASE("MSE 0.01 at MAX 1 is 20 dB") {
        Tensor b = add_scalar(a, 0.1);
        CHECK(psnr(a, b, 1.0) == doctest::Approx(20.0).epsilon(1e-12));
    }
    SUBCASE("MSE 1 at MAX 1 is 0 dB") {
        Tensor b = add_scalar(a, 1.0);
        CHECK(psnr(a, b, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("monotone: psnr strictly decreases as MSE grows") {
        double prev = psnr(a, add_scalar(a, 0.01), 1.0);
        for (double d : {0.02, 0.05, 0.1, 0.2, 0.4}) {
            const double cur = psnr(a, add_scalar(a, d), 1.0);
            CHECK(cur < prev);
            prev = cur;
        }
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS((void)psnr(a, Tensor({4, 5}), 1.0), ShapeError);
    }
}

TEST_CASE("gaussian_stats hand example and symmetries") {
    SUBCASE("two points (0,0),(2,0): mean (1,0), cov [[2,0],[0,0]]") {
        Tensor e({2, 2}, {0, 0, 2, 0});
        EmbeddingStats st = gaussian_stats(e);
        CHECK(st.mean[0] == doctest::Approx(1.0));
        CHECK(st.mean[1] == 0.0);
        CHECK(st.covariance.at(0, 0) == doctest::Approx(2.0));  // unbiased divisor N-1
        CHECK(st.covariance.at(0, 1) == 0.0);
        CHECK(st.covariance.at(1, 1) == 0.0);
    }
    SUBCASE("identical rows give zero covariance") {
        Tensor e({3, 2}, {1, 2, 1, 2, 1, 2});
        EmbeddingStats st = gaussian_stats(e);
        for (std::int64_t i = 0; i < 4; ++i) CHECK(st.covariance[i] == 0.0);
    }
    SUBCASE("row permutation invariance") {
        Rng rng(3);
        Tensor e = rng.normal_tensor({5, 3});
        Tensor p({5, 3});
        const int perm[5] = {4, 2, 0, 3, 1};
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 3; ++j) p.at(i, j) = e.at(perm[i], j);
        EmbeddingStats a = gaussian_stats(e);
        EmbeddingStats b = gaussian_stats(p);
        for (std::int64_t i = 0; i < 9; ++i)
            CHECK(a.covariance[i] == doctest::Approx(b.covariance[i]).epsilon(1e-12));
    }
    SUBCASE("N < 2 is an insufficient-sample error") {
        CHECK_THROWS_AS((void)gaussian_stats(Tensor({1, 3})), InsufficientSampleError);
    }
}

TEST_CASE("fid closed forms") {
    SUBCASE("identical stats give ~0") {
        Rng rng(7);
        Tensor e = rng.normal_tensor({20, 4});
        EmbeddingStats s = gaussian_stats(e);
        CHECK(fid(s, s) <= 1e-6);
    }
    SUBCASE("univariate shifted means") {
        EmbeddingStats r, f;
        r.mean = Tensor({1});
        r.covariance = Tensor::full({1, 1}, 1.0);
        f.mean = Tensor::full({1}, 1.0);
        f.covariance = Tensor::full({1, 1}, 1.0);
        CHECK(fid(r, f) == doctest::Approx(1.0).epsilon(1e-8));
    }
    SUBCASE("univariate variance gap: (1-3)^2 = 4") {
        EmbeddingStats r, f;
        r.mean = Tensor({1});
        r.covariance = Tensor::full({1, 1}, 1.0);
        f.mean = Tensor({1});
        f.covariance = Tensor::full({1, 1}, 9.0);
        CHECK(fid(r, f) == doctest::Approx(4.0).epsilon(1e-8));
    }
    SUBCASE("matches the univariate closed form on random scalar Gaussians") {
        Rng rng(11);
        for (int rep = 0; rep < 20; ++rep) {
            const double mr = rng.normal(), mf = rng.normal();
            const double sr = 0.2 + rng.uniform(), sf = 0.2 + rng.uniform();
            EmbeddingStats r, f;
            r.mean = Tensor::full({1}, mr);
            r.covariance = Tensor::full({1, 1}, sr * sr);
            f.mean = Tensor::full({1}, mf);
            f.covariance = Tensor::full({1, 1}, sf * sf);
            const double want = (mr - mf) * (mr - mf) + (sr - sf) * (sr - sf);
            CHECK(fid(r, f) == doctest::Approx(want).epsilon(1e-8));
        }
    }
    SUBCASE("fid is nonnegative and dimension-checked") {
        EmbeddingStats r, f;
        r.mean = Tensor({2});
        r.covariance = Tensor({2, 2});
        f.mean = Tensor({3});
        f.covariance = Tensor({3, 3});
        CHECK_THROWS_AS((void)fid(r, f), ShapeError);
    }
}

TEST_CASE("lpips basics") {
    FeatureExtractor fx = make_fixed_random_extractor(5);
    Rng rng(9);
    Tensor a = rng.uniform_tensor({16, 16});
    Tensor b = rng.uniform_tensor({16, 16});
    CHECK(lpips(a, a, fx) == 0.0);
    const double ab = lpips(a, b, fx);
    CHECK(ab == doctest::Approx(lpips(b, a, fx)).epsilon(1e-12));
    CHECK(ab >= 0.0);
}

TEST_CASE("pixel class distribution") {
    Tensor m1 = Tensor::full({4, 4}, 1.0);
    Tensor m0({4, 4});
    SUBCASE("identical masks reproduce the mask") {
        auto d = pixel_class_distribution({m1, m1, m1});
        for (std::int64_t i = 0; i < 16; ++i) CHECK(d.prob[i] == 1.0);
        CHECK(d.n_masks == 3);
    }
    SUBCASE("ones and zeros average to one half") {
        auto d = pixel_class_distribution({m1, m0});
        for (std::int64_t i = 0; i < 16; ++i) CHECK(d.prob[i] == 0.5);
    }
    SUBCASE("per-pixel frequency definition") {
        Tensor m2({4, 4});
        m2[5] = 1.0;
        auto d = pixel_class_distribution({m2, m0, m0, m0});
        CHECK(d.prob[5] == doctest::Approx(0.25));
        CHECK(d.prob[6] == 0.0);
    }
    SUBCASE("empty set is an error") {
        CHECK_THROWS_AS((void)pixel_class_distribution({}), InsufficientSampleError);
    }
}

TEST_CASE("divergence properties") {
    Tensor ones = Tensor::full({8, 8}, 1.0);
    Tensor zeros({8, 8});
    PixelClassDistribution P{ones, 10};
    PixelClassDistribution Q{zeros, 10};
    SUBCASE("identical distributions diverge by zero") {
        CHECK(divergence(P, P, DivergenceMode::kld) == 0.0);
        CHECK(divergence(P, P, DivergenceMode::jsd) == 0.0);
    }
    SUBCASE("disjoint supports approach ln 2 per pixel as eps -> 0") {
        const double j = divergence(P, Q, DivergenceMode::jsd, 1e-12);
        CHECK(j == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    }
    SUBCASE("jsd stays within [0, ln 2]") {
        Rng rng(5);
        for (int rep = 0; rep < 10; ++rep) {
            PixelClassDistribution A{rng.uniform_tensor({8, 8}), 5};
            PixelClassDistribution B{rng.uniform_tensor({8, 8}), 5};
            const double j = divergence(A, B, DivergenceMode::jsd);
            CHECK(j >= 0.0);
            CHECK(j <= std::log(2.0) + 1e-12);
        }
    }
    SUBCASE("jsd symmetric, kld generally not") {
        Rng rng(6);
        PixelClassDistribution A{rng.uniform_tensor({8, 8}), 5};
        PixelClassDistribution B{rng.uniform_tensor({8, 8}), 5};
        CHECK(divergence(A, B, DivergenceMode::jsd) ==
              doctest::Approx(divergence(B, A, DivergenceMode::jsd)).epsilon(1e-12));
        CHECK(divergence(A, B, DivergenceMode::kld) != divergence(B, A, DivergenceMode::kld));
    }
}

TEST_CASE("dsc reference cases") {
    Tensor a({4, 4}), b({4, 4});
    SUBCASE("equal nonempty masks score 1") {
        a[1] = a[5] = 1.0;
        CHECK(dsc(a, a) == 1.0);
    }
    SUBCASE("disjoint nonempty masks score 0") {
        a[1] = 1.0;
        b[2] = 1.0;
        CHECK(dsc(a, b) == 0.0);
    }
    SUBCASE("hand count: 2*2/(2+4)") {
        a[0] = a[1] = 1.0;
        b[0] = b[1] = b[2] = b[3] = 1.0;
        CHECK(std::abs(dsc(a, b) - 2.0 / 3.0) <= 1e-12);
    }
    SUBCASE("both empty scores 1 by convention") {
        CHECK(dsc(a, b) == 1.0);
    }
    SUBCASE("dsc is symmetric and within [0,1]") {
        Rng rng(8);
        for (int rep = 0; rep < 10; ++rep) {
            Tensor x({6, 6}), y({6, 6});
            for (std::int64_t i = 0; i < 36; ++i) {
                x[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
                y[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
            }
            const double d = dsc(x, y);
            CHECK(d == dsc(y, x));
            CHECK(d >= 0.0);
            CHECK(d <= 1.0);
        }
    }
}

TEST_CASE("jacobi eigenvalues against a known matrix") {
    // [[2,1],[1,2]] has eigenvalues 1 and 3
    Tensor m({2, 2}, {2, 1, 1, 2});
    auto ev = symmetric_eigenvalues(m);
    std::sort(ev.begin(), ev.end());
    CHECK(ev[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(ev[1] == doctest::Approx(3.0).epsilon(1e-10));
}
