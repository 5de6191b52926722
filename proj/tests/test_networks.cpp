#include <doctest.h>

#include <cmath>

#include "dhvae/errors.hpp"
#include "dhvae/features.hpp"
#include "dhvae/model.hpp"
#include "dhvae/rng.hpp"

using namespace dhvae;

namespace {

ModelConfig small_cfg() {
    ModelConfig cfg;
    cfg.base_filters = 8;
    cfg.max_filters = 16;
    cfg.depth = 2;
    cfg.latent_channels = 4;
    cfg.slice_h = cfg.slice_w = 16;
    cfg.disc_filters = 8;
    cfg.seed = 5;
    return cfg;
}

bool params_equal(const ParamSet& a, const ParamSet& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        if (a.entries[i].first != b.entries[i].first) return false;
        const Tensor& ta = a.entries[i].second;
        const Tensor& tb = b.entries[i].second;
        if (ta.shape() != tb.shape()) return false;
        for (std::int64_t j = 0; j < ta.numel(); ++j)
            if (ta[j] != tb[j]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("init_model is deterministic and validates its config") {
    ModelConfig cfg = small_cfg();
    ModelParams a = init_model(cfg);
    ModelParams b = init_model(cfg);
    CHECK(params_equal(a.params, b.params));
    CHECK(a.params.param_count() > 0);
    CHECK(a.params.all_finite());

    ModelConfig bad = cfg;
    bad.slice_h = 60;
    bad.slice_w = 60;
    bad.depth = 4;  // 60 not divisible by 16
    CHECK_THROWS_AS((void)init_model(bad), ConfigError);
}

TEST_CASE("latent spatial shape follows depth") {
    ModelConfig cfg;
    cfg.depth = 4;
    cfg.slice_h = cfg.slice_w = 64;
    CHECK(cfg.latent_h() == 4);
    CHECK(cfg.latent_w() == 4);
}

TEST_CASE("mirror symmetry of encoder and decoder filter counts") {
    ModelConfig cfg = small_cfg();
    ModelParams mp = init_model(cfg);
    for (std::int64_t i = 0; i < cfg.depth; ++i) {
        const std::int64_t j = cfg.depth - 1 - i;
        const Tensor& enc_w = mp.params.at("enc.b" + std::to_string(i) + ".res.conv1.w");
        const Tensor& dec_w = mp.params.at("dec.b" + std::to_string(j) + ".res.conv1.w");
        CHECK(enc_w.dim(0) == dec_w.dim(0));
    }
}

TEST_CASE("weight standardization: applied kernels have mean 0 variance 1") {
    ModelParams mp = init_model(small_cfg());
    for (const auto& [name, t] : mp.params.entries) {
        if (t.rank() != 4) continue;  // convolution kernels only
        auto [m, v] = standardized_kernel_stats(t);
        for (std::int64_t c = 0; c < m.numel(); ++c) {
            CHECK(std::abs(m[c]) <= 1e-5);
            CHECK(std::abs(v[c] - 1.0) <= 1e-5);
        }
    }
}

TEST_CASE("encode produces finite latents of the right shape; decode inverts shape") {
    ModelConfig cfg = small_cfg();
    ModelParams mp = init_model(cfg);
    Tensor zero({16, 16});
    LatentGaussian lg = encode(mp, zero, zero);
    CHECK(lg.mean.shape() == Shape{4, 4, 4});
    CHECK(lg.log_variance.shape() == Shape{4, 4, 4});
    CHECK(lg.mean.all_finite());
    CHECK(lg.log_variance.all_finite());

    auto [img, msk] = decode(mp, lg.mean);
    CHECK(img.shape() == Shape{16, 16});
    CHECK(msk.shape() == Shape{16, 16});
    // outputs strictly inside (0,1)
    CHECK(img.min() > 0.0);
    CHECK(img.max() < 1.0);
    CHECK(msk.min() > 0.0);
    CHECK(msk.max() < 1.0);

    CHECK_THROWS_AS((void)decode(mp, Tensor({4, 2, 2})), ShapeError);
    CHECK_THROWS_AS((void)encode(mp, Tensor({8, 8}), Tensor({8, 8})), ShapeError);
}

TEST_CASE("batched encode equals per-sample encode") {
    ModelConfig cfg = small_cfg();
    ModelParams mp = init_model(cfg);
    Rng rng(3);
    const int N = 3;
    std::vector<Tensor> imgs, msks;
    for (int i = 0; i < N; ++i) {
        imgs.push_back(rng.uniform_tensor({16, 16}));
        Tensor m({16, 16});
        m[static_cast<std::int64_t>(i * 7 + 3)] = 1.0;
        msks.push_back(m);
    }
    // batched pass
    Graph g;
    ParamVars pv = enter_params(g, mp.params);
    Tensor batch({N, 2, 16, 16});
    for (int i = 0; i < N; ++i) {
        std::copy(imgs[i].data(), imgs[i].data() + 256, batch.data() + (i * 2) * 256);
        std::copy(msks[i].data(), msks[i].data() + 256, batch.data() + (i * 2 + 1) * 256);
    }
    LatentGaussianVar lg = encode_g(g, cfg, pv, g.leaf(batch));
    const Tensor bm = g.value(lg.mean);
    for (int i = 0; i < N; ++i) {
        LatentGaussian single = encode(mp, imgs[static_cast<std::size_t>(i)], msks[static_cast<std::size_t>(i)]);
        for (std::int64_t j = 0; j < single.mean.numel(); ++j)
            CHECK(bm[i * single.mean.numel() + j] == doctest::Approx(single.mean[j]).epsilon(1e-12));
    }
}

TEST_CASE("perturbing one input pixel changes the encoder output") {
    ModelConfig cfg = small_cfg();
    ModelParams mp = init_model(cfg);
    Rng rng(4);
    Tensor img = rng.uniform_tensor({16, 16});
    Tensor msk({16, 16});
    LatentGaussian a = encode(mp, img, msk);
    img[37] = std::min(1.0, img[37] + 0.25);
    LatentGaussian b = encode(mp, img, msk);
    double diff = 0;
    for (std::int64_t j = 0; j < a.mean.numel(); ++j) diff += std::abs(a.mean[j] - b.mean[j]);
    CHECK(diff > 0.0);
}

TEST_CASE("reparameterize") {
    LatentGaussian lg;
    lg.mean = Tensor::full({2, 1, 1}, 1.0);
    lg.log_variance = Tensor({2, 1, 1});
    SUBCASE("zero noise returns the mean") {
        Tensor z = reparameterize(lg, Tensor({2, 1, 1}));
        CHECK(z[0] == 1.0);
        CHECK(z[1] == 1.0);
    }
    SUBCASE("unit variance adds the noise") {
        Tensor n({2, 1, 1}, {0.3, -0.7});
        Tensor z = reparameterize(lg, n);
        CHECK(z[0] == doctest::Approx(1.3));
        CHECK(z[1] == doctest::Approx(0.3));
    }
    SUBCASE("hand arithmetic: mean 1, var 4, noise 0.5 -> 2") {
        lg.log_variance = Tensor::full({2, 1, 1}, std::log(4.0));
        Tensor n = Tensor::full({2, 1, 1}, 0.5);
        Tensor z = reparameterize(lg, n);
        CHECK(z[0] == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("encoder gradient flows to inputs (finite-difference probe)") {
    ModelConfig cfg = small_cfg();
    ModelParams mp = init_model(cfg);
    Rng rng(8);
    Tensor img = rng.uniform_tensor({1, 2, 16, 16});
    Graph g;
    ParamVars pv = enter_params(g, mp.params);
    Var x = g.leaf(img, true);
    LatentGaussianVar lg = encode_g(g, cfg, pv, x);
    Var loss = sum_all(mul(lg.mean, lg.mean));
    Var gx = g.gradients(loss, {x})[0];
    // sparse finite-difference check on a few coordinates
    const double h = 1e-6;
    for (std::int64_t idx : {0L, 137L, 300L, 511L}) {
        Tensor xp = img;
        xp[idx] += h;
        Graph gp;
        LatentGaussianVar lp = encode_g(gp, cfg, enter_params(gp, mp.params), gp.leaf(xp));
        xp[idx] -= 2 * h;
        Graph gm;
        LatentGaussianVar lm = encode_g(gm, cfg, enter_params(gm, mp.params), gm.leaf(xp));
        const double fp = sum(mul(gp.value(lp.mean), gp.value(lp.mean)));
        const double fm = sum(mul(gm.value(lm.mean), gm.value(lm.mean)));
        const double fd = (fp - fm) / (2 * h);
        CHECK(g.value(gx)[idx] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("discriminator patch map shape and determinism") {
    ModelConfig cfg;
    cfg.base_filters = 8;
    cfg.max_filters = 16;
    cfg.depth = 2;
    cfg.latent_channels = 4;
    cfg.slice_h = cfg.slice_w = 64;
    cfg.disc_filters = 8;
    cfg.disc_depth = 3;
    ParamSet dp = init_discriminator(cfg);
    Tensor img({64, 64});
    Tensor msk({64, 64});
    Tensor m1 = discriminate(cfg, dp, img, msk);
    CHECK(m1.shape() == Shape{8, 8});  // 64 / 2^3
    CHECK(m1.all_finite());
    Tensor m2 = discriminate(cfg, dp, img, msk);
    for (std::int64_t i = 0; i < m1.numel(); ++i) CHECK(m1[i] == m2[i]);
}

TEST_CASE("fixed-random extractor is reproducible and has 4 taps") {
    FeatureExtractor fx1 = make_fixed_random_extractor(11);
    FeatureExtractor fx2 = make_fixed_random_extractor(11);
    Rng rng(2);
    Tensor img = rng.uniform_tensor({16, 16});
    auto t1 = extract_features(fx1, img);
    auto t2 = extract_features(fx2, img);
    REQUIRE(t1.size() == 4);
    REQUIRE(t2.size() == 4);
    for (std::size_t i = 0; i < t1.size(); ++i)
        for (std::int64_t j = 0; j < t1[i].numel(); ++j) REQUIRE(t1[i][j] == t2[i][j]);
    // identical inputs -> identical features on the same extractor
    auto t3 = extract_features(fx1, img);
    for (std::int64_t j = 0; j < t1[0].numel(); ++j) REQUIRE(t1[0][j] == t3[0][j]);
}

TEST_CASE("embedding dim matches tap channel sum") {
    FeatureExtractor fx = make_fixed_random_extractor(0);
    CHECK(embedding_dim(fx) == 12 + 24 + 48 + 96);
    Rng rng(1);
    Tensor e = embed_image(fx, rng.uniform_tensor({16, 16}));
    CHECK(e.numel() == embedding_dim(fx));
}

TEST_CASE("resolve_extractor falls back when the asset dir is unset") {
    std::string note;
    FeatureExtractor fx = resolve_extractor(ExtractorKind::pretrained_16_layer_conv, 3, &note);
    CHECK(fx.kind == ExtractorKind::fixed_random_test);
    CHECK(!note.empty());
}
