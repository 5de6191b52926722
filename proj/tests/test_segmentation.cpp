#include <doctest.h>

#include <cmath>

#include "dhvae/errors.hpp"
#include "dhvae/metrics.hpp"
#include "dhvae/rng.hpp"
#include "dhvae/unet.hpp"

using namespace dhvae;

namespace {

SegConfig tiny_cfg() {
    SegConfig c;
    c.depth = 2;
    c.base_filters = 8;
    c.epochs = 2;
    c.batch_size = 4;
    c.lr = 1e-3;
    c.seed = 3;
    c.slice_h = c.slice_w = 16;
    return c;
}

SliceDataset tiny_dataset(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SlicePair> pairs;
    for (int i = 0; i < n; ++i) {
        SlicePair p;
        p.image = Tensor({16, 16});
        p.mask = Tensor({16, 16});
        // bright 4x4 square at a random spot, darker elsewhere
        const std::int64_t cy = 2 + rng.uniform_int(9), cx = 2 + rng.uniform_int(9);
        for (std::int64_t y = 0; y < 16; ++y)
            for (std::int64_t x = 0; x < 16; ++x) {
                const bool in = y >= cy && y < cy + 4 && x >= cx && x < cx + 4;
                p.image.at(y, x) = in ? 0.9 : 0.2 + 0.05 * rng.uniform();
                p.mask.at(y, x) = in ? 1.0 : 0.0;
            }
        p.subject_id = "s" + std::to_string(i);
        p.slice_index = i;
        pairs.push_back(std::move(p));
    }
    return SliceDataset::from_pairs(std::move(pairs), "train");
}

}  // namespace

TEST_CASE("segmenter training is deterministic and fills its history") {
    SliceDataset ds = tiny_dataset(8, 1);
    SegConfig cfg = tiny_cfg();
    auto [p1, h1] = train_segmenter(ds, cfg);
    auto [p2, h2] = train_segmenter(ds, cfg);
    REQUIRE(h1.size() == static_cast<std::size_t>(cfg.epochs));
    for (std::size_t i = 0; i < p1.params.entries.size(); ++i) {
        const Tensor& a = p1.params.entries[i].second;
        const Tensor& b = p2.params.entries[i].second;
        for (std::int64_t j = 0; j < a.numel(); ++j) REQUIRE(a[j] == b[j]);
    }
    for (std::size_t e = 0; e < h1.size(); ++e) {
        CHECK(h1[e].loss == h2[e].loss);
        CHECK(std::isfinite(h1[e].loss));
    }
}

TEST_CASE("memorization smoke: identical pairs reach DSC >= 0.95") {
    // dataset of one repeated pair; enough epochs to memorize
    SliceDataset one = tiny_dataset(1, 7);
    std::vector<SlicePair> reps;
    for (int i = 0; i < 8; ++i) reps.push_back(one.pairs[0]);
    SliceDataset ds = SliceDataset::from_pairs(std::move(reps), "train");
    SegConfig cfg = tiny_cfg();
    cfg.epochs = 40;
    cfg.seed = 11;
    auto [params, history] = train_segmenter(ds, cfg);
    Tensor pred = predict_slice(params, ds.pairs[0].image);
    CHECK(dsc(pred, ds.pairs[0].mask) >= 0.95);
}

TEST_CASE("training loss non-increasing in >= 80% of adjacent epochs on blobs") {
    auto corpus = make_blob_corpus(3, 16, 16, 8, 21);
    std::vector<SlicePair> pairs;
    for (auto& [img, mask] : corpus) {
        const Volume3D norm = minmax_normalize(img);
        for (auto& p : extract_tumor_slices(norm, mask, 5)) pairs.push_back(std::move(p));
    }
    SliceDataset ds = SliceDataset::from_pairs(std::move(pairs), "train");
    SegConfig cfg = tiny_cfg();
    cfg.epochs = 10;
    cfg.seed = 2;
    auto [params, history] = train_segmenter(ds, cfg);
    int down = 0, total = 0;
    for (std::size_t e = 1; e < history.size(); ++e) {
        down += history[e].loss <= history[e - 1].loss;
        ++total;
    }
    CHECK(down >= static_cast<int>(0.8 * total));
}

TEST_CASE("predict_slice output is binary and deterministic; threshold uses >= 0.5") {
    SliceDataset ds = tiny_dataset(4, 5);
    auto [params, history] = train_segmenter(ds, tiny_cfg());
    Tensor a = predict_slice(params, ds.pairs[0].image);
    Tensor b = predict_slice(params, ds.pairs[0].image);
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        CHECK(a[i] == b[i]);
        CHECK((a[i] == 0.0 || a[i] == 1.0));
    }
    CHECK_THROWS_AS((void)predict_slice(params, Tensor({8, 8})), ShapeError);
}

TEST_CASE("segment_volume selector semantics") {
    SliceDataset ds = tiny_dataset(4, 9);
    auto [params, history] = train_segmenter(ds, tiny_cfg());
    Volume3D vol;
    vol.values = Tensor({6, 16, 16});
    Rng rng(2);
    for (std::int64_t i = 0; i < vol.values.numel(); ++i) vol.values[i] = rng.uniform();
    vol.subject_id = "v";

    SUBCASE("empty selector gives an all-zero mask") {
        MaskVolume3D m = segment_volume(params, vol, {0, 0});
        CHECK(m.foreground_count() == 0);
    }
    SUBCASE("full range predicts every slice") {
        MaskVolume3D full = segment_volume(params, vol, full_range_selector(vol));
        MaskVolume3D partial = segment_volume(params, vol, {2, 4});
        const std::int64_t plane = 16 * 16;
        for (std::int64_t z = 2; z < 4; ++z)
            for (std::int64_t i = 0; i < plane; ++i)
                CHECK(partial.values[z * plane + i] == full.values[z * plane + i]);
        for (std::int64_t i = 0; i < plane; ++i) CHECK(partial.values[i] == 0.0);
    }
    SUBCASE("selector outside depth is a range error") {
        CHECK_THROWS_AS((void)segment_volume(params, vol, {0, 7}), RangeError);
    }
}

TEST_CASE("2D-to-3D consistency: stacked DSC equals voxelwise DSC") {
    SliceDataset ds = tiny_dataset(4, 13);
    auto [params, history] = train_segmenter(ds, tiny_cfg());
    Volume3D vol;
    vol.values = Tensor({4, 16, 16});
    Rng rng(4);
    for (std::int64_t i = 0; i < vol.values.numel(); ++i) vol.values[i] = rng.uniform();
    MaskVolume3D gt;
    gt.values = Tensor({4, 16, 16});
    for (std::int64_t i = 0; i < 40; ++i) gt.values[rng.uniform_int(gt.values.numel())] = 1.0;

    const MaskVolume3D pred = segment_volume(params, vol, full_range_selector(vol));
    // per-slice counts aggregated by hand
    const std::int64_t plane = 16 * 16;
    std::int64_t inter = 0, np = 0, ng = 0;
    for (std::int64_t z = 0; z < 4; ++z)
        for (std::int64_t i = 0; i < plane; ++i) {
            const bool a = pred.values[z * plane + i] != 0.0;
            const bool b = gt.values[z * plane + i] != 0.0;
            inter += a && b;
            np += a;
            ng += b;
        }
    const double by_hand = np + ng == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
    CHECK(dsc(pred.values, gt.values) == by_hand);
}

TEST_CASE("evaluate_dsc aggregation") {
    SliceDataset ds = tiny_dataset(4, 17);
    auto [params, history] = train_segmenter(ds, tiny_cfg());

    auto make_subject = [&](std::uint64_t seed) {
        Volume3D vol;
        vol.values = Tensor({4, 16, 16});
        Rng rng(seed);
        for (std::int64_t i = 0; i < vol.values.numel(); ++i) vol.values[i] = rng.uniform();
        MaskVolume3D gt;
        gt.values = Tensor({4, 16, 16});
        gt.values[100 + static_cast<std::int64_t>(seed)] = 1.0;
        return std::pair<Volume3D, MaskVolume3D>{std::move(vol), std::move(gt)};
    };

    SUBCASE("single subject has zero std") {
        std::vector<std::pair<Volume3D, MaskVolume3D>> test;
        test.push_back(make_subject(1));
        auto [mean, sd] = evaluate_dsc(params, test, make_selector(SelectorPolicy::full_range));
        CHECK(sd == 0.0);
    }
    SUBCASE("empty test set is a config error") {
        std::vector<std::pair<Volume3D, MaskVolume3D>> test;
        CHECK_THROWS_AS((void)evaluate_dsc(params, test, make_selector(SelectorPolicy::full_range)), ConfigError);
    }
    SUBCASE("oracle selector covers exactly the tumor extent") {
        auto [vol, gt] = make_subject(3);
        gt.values = Tensor({4, 16, 16});
        gt.values.at(1, 4, 4) = 1.0;
        gt.values.at(2, 8, 8) = 1.0;
        SliceSelector sel = oracle_extent_selector(gt);
        CHECK(sel.z0 == 1);
        CHECK(sel.z1 == 3);
    }
}

TEST_CASE("empty dataset rejected; config validated") {
    SegConfig cfg = tiny_cfg();
    CHECK_THROWS_AS((void)train_segmenter(SliceDataset::from_pairs({}, "train"), cfg), ConfigError);
    SegConfig bad = cfg;
    bad.slice_h = 18;  // not divisible by 2^depth
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
